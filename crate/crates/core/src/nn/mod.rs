//! Layers with hand-written reverse-mode gradients.
//!
//! Forward passes push their intermediates onto a [`GradTape`]; backward
//! passes pop them in reverse order. A tape therefore has to be unwound by
//! the same sequence of layers that filled it.

mod activation;
pub mod checkpoint;
mod kan;
mod linear;
mod network;

pub use activation::{sigmoid, silu, silu_prime, ActivationKind};
pub use kan::KanLayer;
pub use linear::LinearLayer;
pub use network::{Layer, NetGrad, Network};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Gradients produced by one layer's backward pass.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    /// Same order as the layer's `params()`; empty when parameter gradients
    /// were not requested.
    pub params: Vec<Matrix>,
    pub input: Matrix,
}

#[derive(Clone, Debug)]
pub(crate) enum TapeEntry {
    Linear {
        input: Matrix,
    },
    Kan {
        activated: Matrix,
        activated_prime: Matrix,
        basis: Matrix,
        basis_prime: Matrix,
    },
    Activation {
        kind: ActivationKind,
        pre: Matrix,
    },
}

#[derive(Clone, Debug, Default)]
pub struct GradTape {
    entries: Vec<TapeEntry>,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn push(&mut self, entry: TapeEntry) {
        self.entries.push(entry);
    }

    pub(crate) fn pop(&mut self) -> Result<TapeEntry> {
        self.entries.pop().ok_or(Error::NoForward)
    }
}
