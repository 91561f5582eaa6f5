use crate::bspline::SplineGrid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

use super::{ActivationKind, GradTape, KanLayer, LinearLayer, TapeEntry};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear(LinearLayer),
    Kan(KanLayer),
}

impl Layer {
    pub fn n_in(&self) -> usize {
        match self {
            Layer::Linear(l) => l.n_in(),
            Layer::Kan(l) => l.n_in(),
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            Layer::Linear(l) => l.n_out(),
            Layer::Kan(l) => l.n_out(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Linear(l) => l.param_count(),
            Layer::Kan(l) => l.param_count(),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        match self {
            Layer::Linear(l) => l.params(),
            Layer::Kan(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Linear(l) => l.params_mut(),
            Layer::Kan(l) => l.params_mut(),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Linear(_) => LinearLayer::param_names(),
            Layer::Kan(_) => KanLayer::param_names(),
        }
    }

    pub fn forward(&self, x: &Matrix, tape: Option<&mut GradTape>) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward(x, tape),
            Layer::Kan(l) => l.forward(x, tape),
        }
    }

    pub fn backward(&self, tape: &mut GradTape, upstream: &Matrix, param_grads: bool) -> Result<super::LayerGrad> {
        match self {
            Layer::Linear(l) => l.backward(tape, upstream, param_grads),
            Layer::Kan(l) => l.backward(tape, upstream, param_grads),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetGrad {
    /// Flattened in `Network::params()` order; empty if not requested.
    pub params: Vec<Matrix>,
    pub input: Matrix,
}

/// A feed-forward stack; `activations[i]` follows `layers[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    activations: Vec<ActivationKind>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, activations: Vec<ActivationKind>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(Error::InvalidArgument(format!(
                "{} layers with {} activations",
                layers.len(),
                activations.len()
            )));
        }
        for w in layers.windows(2) {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::shape(
                    "network wiring",
                    (w[0].n_in(), w[0].n_out()),
                    (w[1].n_in(), w[1].n_out()),
                ));
            }
        }
        Ok(Self { layers, activations })
    }

    /// Linear layers through `widths` with `hidden` between them and no
    /// activation on the output.
    pub fn mlp(widths: &[usize], hidden: ActivationKind, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2);
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .map(|w| Layer::Linear(LinearLayer::init(w[0], w[1], rng)))
            .collect();
        let activations = (0..n)
            .map(|i| if i + 1 < n { hidden } else { ActivationKind::Identity })
            .collect();
        Self { layers, activations }
    }

    /// KAN layers through `widths`; the edge functions are the only
    /// nonlinearity.
    pub fn kan(widths: &[usize], grid: &SplineGrid, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2);
        let layers: Vec<Layer> = widths
            .windows(2)
            .map(|w| Layer::Kan(KanLayer::init(w[0], w[1], grid.clone(), rng)))
            .collect();
        let activations = vec![ActivationKind::Identity; layers.len()];
        Self { layers, activations }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[ActivationKind] {
        &self.activations
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.param_names().iter().map(move |n| format!("{prefix}.{i}.{n}")))
            .collect()
    }

    pub fn forward(&self, x: &Matrix, mut tape: Option<&mut GradTape>) -> Result<Matrix> {
        let mut h = self.layers[0].forward(x, tape.as_deref_mut())?;
        for i in 0..self.layers.len() {
            if i > 0 {
                h = self.layers[i].forward(&h, tape.as_deref_mut())?;
            }
            let act = self.activations[i];
            if act != ActivationKind::Identity {
                let out = act.forward(&h);
                if let Some(t) = tape.as_deref_mut() {
                    t.push(TapeEntry::Activation { kind: act, pre: h });
                }
                h = out;
            }
        }
        Ok(h)
    }

    pub fn backward(&self, tape: &mut GradTape, upstream: &Matrix, param_grads: bool) -> Result<NetGrad> {
        let mut grad = upstream.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if self.activations[i] != ActivationKind::Identity {
                let TapeEntry::Activation { kind, pre } = tape.pop()? else {
                    return Err(Error::NoForward);
                };
                grad = kind.backward(&pre, &grad);
            }
            let lg = self.layers[i].backward(tape, &grad, param_grads)?;
            per_layer.push(lg.params);
            grad = lg.input;
        }
        per_layer.reverse();
        Ok(NetGrad {
            params: per_layer.into_iter().flatten().collect(),
            input: grad,
        })
    }

    /// `self ← tau·other + (1 − tau)·self`, tensor by tensor.
    pub fn blend_from(&mut self, other: &Network, tau: f64) -> Result<()> {
        let src = other.params();
        let dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(Error::InvalidArgument("networks have different layouts".into()));
        }
        for (d, s) in dst.into_iter().zip(src) {
            if d.shape() != s.shape() {
                return Err(Error::shape("soft_update", d.shape(), s.shape()));
            }
            for (a, &b) in d.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wiring_is_validated() {
        let layers = vec![
            Layer::Linear(LinearLayer::zeros(3, 4)),
            Layer::Linear(LinearLayer::zeros(5, 1)),
        ];
        let acts = vec![ActivationKind::ReLU, ActivationKind::Identity];
        assert!(Network::new(layers, acts).is_err());
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = Rng::new(4);
        let net = Network::kan(&[3, 4, 2], &SplineGrid::default(), &mut rng);
        let x = rng.gaussian(6, 3);
        assert_eq!(net.forward(&x, None).unwrap(), net.forward(&x, None).unwrap());
    }

    #[test]
    fn param_names_line_up_with_params() {
        let mut rng = Rng::new(4);
        let net = Network::mlp(&[3, 8, 2], ActivationKind::ReLU, &mut rng);
        assert_eq!(net.param_names("q").len(), net.params().len());
        assert_eq!(net.param_names("q")[2], "q.1.weight");
    }
}
