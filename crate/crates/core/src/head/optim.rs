use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, HeadError, HeadNetwork, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment update of one parameter slice at step `t`
/// (1-based).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hyper: &AdamHyper,
    t: u64,
) {
    let bc1 = 1.0 - hyper.beta1.powf(t as f64);
    let bc2 = 1.0 - hyper.beta2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

/// First and second moments for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(net: &HeadNetwork) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    for (layer, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
        if w.iter().chain(b.iter()).any(|g| !g.is_finite()) {
            return Err(HeadError::NonFiniteGradient { layer });
        }
    }
    Ok(())
}

fn check_shapes(net: &HeadNetwork, grads: &Gradients) -> Result<()> {
    let ok = grads.weights.len() == net.layers.len()
        && grads.biases.len() == net.layers.len()
        && net.layers.iter().zip(&grads.weights).all(|(l, g)| l.weights.dim() == g.dim())
        && net.layers.iter().zip(&grads.biases).all(|(l, g)| l.bias.dim() == g.dim());
    if ok {
        Ok(())
    } else {
        Err(HeadError::Shape("gradients do not match network parameters".into()))
    }
}

fn adam_matrix(p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, h: &AdamHyper, t: u64) {
    let (bc1, bc2) = (1.0 - h.beta1.powf(t as f64), 1.0 - h.beta2.powf(t as f64));
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        *p -= h.lr * (*m / bc1) / ((*v / bc2).sqrt() + h.eps);
    });
}

fn adam_vector(p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, h: &AdamHyper, t: u64) {
    let (bc1, bc2) = (1.0 - h.beta1.powf(t as f64), 1.0 - h.beta2.powf(t as f64));
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        *p -= h.lr * (*m / bc1) / ((*v / bc2).sqrt() + h.eps);
    });
}

/// One adaptive-moment step over the whole network.
pub fn optimizer_step(
    net: &mut HeadNetwork,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamHyper,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(HeadError::Config("optimizer step count starts at 1".into()));
    }
    check_shapes(net, grads)?;
    check_finite(grads)?;
    for (i, layer) in net.layers.iter_mut().enumerate() {
        adam_matrix(
            &mut layer.weights,
            &grads.weights[i],
            &mut state.m.weights[i],
            &mut state.v.weights[i],
            hyper,
            t,
        );
        adam_vector(
            &mut layer.bias,
            &grads.biases[i],
            &mut state.m.biases[i],
            &mut state.v.biases[i],
            hyper,
            t,
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam with its own step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub state: AdamState,
    pub t: u64,
}

impl Adam {
    pub fn new(net: &HeadNetwork, hyper: AdamHyper) -> Self {
        Self {
            hyper,
            state: AdamState::new(net),
            t: 0,
        }
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &HeadNetwork, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(
                net,
                AdamHyper {
                    lr,
                    ..AdamHyper::default()
                },
            )),
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd { lr }),
        }
    }

    pub fn step(&mut self, net: &mut HeadNetwork, grads: &Gradients) -> Result<()> {
        match self {
            Optimizer::Adam(a) => {
                a.t += 1;
                optimizer_step(net, grads, &mut a.state, &a.hyper, a.t)
            }
            Optimizer::Sgd(s) => {
                check_shapes(net, grads)?;
                check_finite(grads)?;
                for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                    layer.weights.scaled_add(-s.lr, gw);
                    layer.bias.scaled_add(-s.lr, gb);
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{init_head, HeadConfig};

    #[test]
    fn scalar_first_step() {
        let (mut w, mut m, mut v) = ([0.0], [0.0], [0.0]);
        let h = AdamHyper::default();
        adam_update(&mut w, &[1.0], &mut m, &mut v, &h, 1);
        // m_hat = 1, v_hat = 1 -> w = -lr / (1 + eps)
        assert!((w[0] - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    fn cfg() -> HeadConfig {
        HeadConfig {
            input_dim: 6,
            hidden_widths: [5, 4, 4, 3],
            output_dim: 3,
            dropout_rate: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut net = init_head(&cfg()).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        optimizer_step(&mut net, &Gradients::zeros_like(&before), &mut state, &AdamHyper::default(), 1).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn network_step_matches_scalar_rule() {
        let mut net = init_head(&cfg()).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[2][[1, 2]] = 0.5;
        grads.biases[4][0] = -2.0;
        let mut state = AdamState::new(&net);
        let h = AdamHyper::default();
        optimizer_step(&mut net, &grads, &mut state, &h, 1).unwrap();
        let mut w = [before.layers[2].weights[[1, 2]]];
        adam_update(&mut w, &[0.5], &mut [0.0], &mut [0.0], &h, 1);
        assert_eq!(net.layers[2].weights[[1, 2]], w[0]);
        assert!((net.layers[4].bias[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_rejects_nan() {
        let net = init_head(&cfg()).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0].fill(0.3);
        let run = || {
            let mut n = net.clone();
            let mut s = AdamState::new(&n);
            optimizer_step(&mut n, &grads, &mut s, &AdamHyper::default(), 1).unwrap();
            optimizer_step(&mut n, &grads, &mut s, &AdamHyper::default(), 2).unwrap();
            (n, s)
        };
        assert_eq!(run(), run());

        let mut bad = grads.clone();
        bad.biases[3][0] = f64::INFINITY;
        let mut n = net.clone();
        let mut s = AdamState::new(&n);
        assert!(matches!(
            optimizer_step(&mut n, &bad, &mut s, &AdamHyper::default(), 1),
            Err(HeadError::NonFiniteGradient { layer: 3 })
        ));
        assert_eq!(n, net);
    }

    #[test]
    fn sgd_step() {
        let mut net = init_head(&cfg()).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.biases[0][0] = 1.0;
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &net, 0.1);
        opt.step(&mut net, &grads).unwrap();
        assert!((net.layers[0].bias[0] - (before.layers[0].bias[0] - 0.1)).abs() < 1e-15);
    }
}
