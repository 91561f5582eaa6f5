//! Shared fixtures for the criterion benches.

use kancql::cql::{CqlHyperparams, TrainState};
use kancql::dataset::{Dataset, Tier};
use kancql::env::EnvSpec;
use kancql::policy::NetworkConfig;

/// A small pointmass dataset, the same for every bench run.
pub fn pointmass_dataset(n: usize) -> Dataset {
    Dataset::generate(&EnvSpec::pointmass2d(), Tier::Medium, n, 7).expect("dataset generation")
}

/// A fresh trainer for `config` over `dataset`.
pub fn trainer(config: &str, dataset: &Dataset, hp: &CqlHyperparams) -> TrainState {
    let cfg = NetworkConfig::by_name(config).expect("known config");
    TrainState::new(&cfg, dataset.obs_dim(), dataset.act_dim(), hp, 0).expect("valid hyperparameters")
}
