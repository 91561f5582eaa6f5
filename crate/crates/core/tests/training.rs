use kancql::cql::{
    alpha2_update, soft_update, train, train_step, write_metrics_csv, CqlHyperparams, EvalSummary, TrainState,
};
use kancql::policy::{build, NetworkConfig};
use kancql::{Dataset, EnvSpec, Matrix, Rng, Tier};

fn small_hp() -> CqlHyperparams {
    CqlHyperparams {
        batch_size: 32,
        n_policy_actions: 3,
        n_random_actions: 3,
        steps_per_epoch: 5,
        eval_episodes: 2,
        ..Default::default()
    }
}

fn pointmass(tier: Tier, n: usize) -> Dataset {
    Dataset::generate(&EnvSpec::pointmass2d(), tier, n, 0).unwrap()
}

fn no_eval(_: usize, _: &kancql::policy::Networks) -> kancql::Result<EvalSummary> {
    Ok(EvalSummary {
        return_mean: 0.0,
        return_std: 0.0,
        normalized_score: 0.0,
    })
}

fn cfg(name: &str) -> NetworkConfig {
    NetworkConfig::by_name(name).unwrap()
}

#[test]
fn identical_seeds_give_identical_steps() {
    let data = pointmass(Tier::Medium, 1000);
    let hp = small_hp();
    for name in ["mlp-a1c1", "kan-a1c1"] {
        let mut a = TrainState::new(&cfg(name), 4, 2, &hp, 9).unwrap();
        let mut b = a.clone();
        for _ in 0..5 {
            assert_eq!(
                train_step(&mut a, &data, &hp).unwrap(),
                train_step(&mut b, &data, &hp).unwrap()
            );
        }
        assert_eq!(a.nets, b.nets);
    }
}

#[test]
fn zero_epochs_returns_initial_networks() {
    let data = pointmass(Tier::Medium, 500);
    let hp = small_hp();
    let out = train(&cfg("mlp-a1c1"), &data, &hp, 0, 3, no_eval, None).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.state.step, 0);
    let fresh = TrainState::new(&cfg("mlp-a1c1"), 4, 2, &hp, 3).unwrap();
    assert_eq!(out.state.nets, fresh.nets);
}

#[test]
fn one_metrics_row_per_epoch_and_csv_schema() {
    let data = pointmass(Tier::Medium, 500);
    let hp = small_hp();
    let mut calls = Vec::new();
    let hook = |epoch: usize, _: &kancql::policy::Networks| {
        calls.push(epoch);
        Ok(EvalSummary {
            return_mean: -1.0,
            return_std: 0.5,
            normalized_score: 42.0,
        })
    };
    let out = train(&cfg("mlp-a1c1"), &data, &hp, 3, 1, hook, None).unwrap();
    assert_eq!(calls, vec![1, 2, 3]);
    assert_eq!(out.metrics.len(), 3);
    assert_eq!(out.state.step, 15);
    assert_eq!(out.metrics[2].normalized_score, 42.0);

    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &out.metrics).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,critic1_loss,critic2_loss,actor_loss,alpha2,conservative_gap,mean_q_data,mean_q_pi,\
         eval_return_mean,eval_return_std,normalized_score,wall_seconds"
    );
    assert_eq!(lines.count(), 3);

    let mut empty = Vec::new();
    write_metrics_csv(&mut empty, &[]).unwrap();
    assert!(String::from_utf8(empty).unwrap().starts_with("epoch,critic1_loss"));
}

#[test]
fn checkpoint_is_written_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.kcql");
    let data = pointmass(Tier::Medium, 500);
    let out = train(&cfg("hyb-a0c3"), &data, &small_hp(), 1, 2, no_eval, Some(&path)).unwrap();
    let ck = kancql::nn::checkpoint::Checkpoint::load(&path).unwrap();
    let nets = kancql::policy::Networks::from_checkpoint(&ck).unwrap();
    assert_eq!(nets, out.state.nets);
    assert_eq!(ck.manifest.scalars["step"], 5.0);
}

#[test]
fn soft_update_examples() {
    let c = cfg("mlp-a1c1");
    let nets = build(&c, 2, 1, &Rng::new(1));
    let other = build(&c, 2, 1, &Rng::new(2));
    let live = &nets.critics[0];

    let mut t = other.critics[0].clone();
    soft_update(live, &mut t, 1.0).unwrap();
    assert_eq!(&t, live);

    let mut t = other.critics[0].clone();
    soft_update(live, &mut t, 0.0).unwrap();
    assert_eq!(t, other.critics[0]);

    let mut live2 = live.clone();
    let mut t = live.clone();
    live2.params_mut().into_iter().for_each(|p| p.as_mut_slice().fill(2.0));
    t.params_mut().into_iter().for_each(|p| p.as_mut_slice().fill(0.0));
    soft_update(&live2, &mut t, 0.5).unwrap();
    assert!(t.params().iter().all(|p| p.as_slice().iter().all(|&v| v == 1.0)));

    let mismatched = build(&cfg("mlp-a2c2"), 2, 1, &Rng::new(3));
    let mut t = other.critics[0].clone();
    assert!(soft_update(&mismatched.critics[0], &mut t, 0.5).is_err());
}

fn distance(a: &[&Matrix], b: &[&Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn targets_contract_toward_a_fixed_live_critic() {
    let c = cfg("kan-a1c1");
    let live = build(&c, 3, 2, &Rng::new(5)).critics[0].clone();
    let mut target = build(&c, 3, 2, &Rng::new(6)).critics[0].clone();
    let tau = 0.005;
    for _ in 0..50 {
        let before = distance(&target.params(), &live.params());
        soft_update(&live, &mut target, tau).unwrap();
        let after = distance(&target.params(), &live.params());
        assert!(
            after <= (1.0 - tau) * before * (1.0 + 1e-12),
            "{after} > (1-τ)·{before}"
        );
    }
}

#[test]
fn alpha2_moves_against_entropy_error() {
    let data = pointmass(Tier::Medium, 500);
    let batch = data.batch(&(0..64).collect::<Vec<_>>());
    let c = cfg("mlp-a1c1");

    // A near-deterministic policy has log π far above −H̄: α2 must rise.
    let mut hp = small_hp();
    let mut st = TrainState::new(&c, 4, 2, &hp, 0).unwrap();
    st.nets
        .actor
        .params_mut()
        .into_iter()
        .for_each(|p| p.as_mut_slice().fill(0.0));
    let last = st.nets.actor.params_mut().pop().unwrap();
    // Output bias rows 2..4 are the log-std units.
    last.as_mut_slice()[2] = -6.0;
    last.as_mut_slice()[3] = -6.0;
    let before = st.log_alpha2;
    let after = alpha2_update(&batch, &mut st, &hp).unwrap();
    assert!(after > before);
    assert!(st.alpha2() > 0.0);

    // A target equal to −E[log π] is a fixed point.
    let mut st = TrainState::new(&c, 4, 2, &hp, 0).unwrap();
    let mut probe = st.rng.clone();
    let (_, logp) = st.nets.actor.sample_action(&batch.obs, &mut probe).unwrap();
    hp.target_entropy = Some(-logp.mean());
    let before = st.log_alpha2;
    assert_eq!(alpha2_update(&batch, &mut st, &hp).unwrap(), before);
}

#[test]
fn large_alpha1_drives_the_gap_down() {
    let data = pointmass(Tier::Medium, 5000);
    let hp = CqlHyperparams {
        alpha1: kancql::cql::Alpha1Mode::Fixed(50.0),
        batch_size: 64,
        n_policy_actions: 4,
        n_random_actions: 4,
        ..Default::default()
    };
    let mut st = TrainState::new(&cfg("mlp-a1c1"), 4, 2, &hp, 0).unwrap();
    let gaps: Vec<f64> = (0..200)
        .map(|_| train_step(&mut st, &data, &hp).unwrap().conservative_gap)
        .collect();
    let window = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let means: Vec<f64> = gaps.chunks(50).map(window).collect();
    assert!(
        means.windows(2).all(|w| w[1] < w[0]),
        "window means not decreasing: {means:?}"
    );
}

#[test]
fn losses_stay_finite_on_every_config() {
    let data = pointmass(Tier::MediumReplay, 2000);
    let hp = CqlHyperparams {
        batch_size: 16,
        n_policy_actions: 2,
        n_random_actions: 2,
        ..Default::default()
    };
    for c in NetworkConfig::all() {
        let mut st = TrainState::new(c, 4, 2, &hp, 1).unwrap();
        for step in 0..1000 {
            let r = train_step(&mut st, &data, &hp).unwrap();
            assert!(r.is_finite(), "{} step {step}: {r:?}", c.name);
        }
    }
}

#[test]
fn conservatism_on_pendulum() {
    let spec = EnvSpec::pendulum1d();
    let data = Dataset::generate(&spec, Tier::Medium, 20_000, 0).unwrap();
    let held_out = Dataset::generate(&spec, Tier::Medium, 1024, 1).unwrap();
    let hp = CqlHyperparams {
        batch_size: 128,
        n_policy_actions: 4,
        n_random_actions: 4,
        ..Default::default()
    };
    let mut st = TrainState::new(&cfg("mlp-a1c1"), 3, 1, &hp, 0).unwrap();
    for _ in 0..2000 {
        train_step(&mut st, &data, &hp).unwrap();
    }
    let batch = held_out.batch(&(0..1024).collect::<Vec<_>>());
    let q1 = &st.nets.critics[0];
    let q_data = q1.q_value(&batch.obs, &batch.actions, None).unwrap().mean();
    let uniform = Rng::new(77).uniform_matrix(1024, 1, -1.0, 1.0);
    let q_rand = q1.q_value(&batch.obs, &uniform, None).unwrap().mean();
    assert!(q_rand <= q_data, "uniform {q_rand} > data {q_data}");
}
