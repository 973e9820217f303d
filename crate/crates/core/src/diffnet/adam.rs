use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied as `p ← p − lr·wd·p` before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub config: AdamConfig,
    pub step: u64,
    first: ParamStore,
    second: ParamStore,
}

impl OptState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        OptState {
            config,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }
}

/// One Adam update with bias correction. Updated parameters are rounded to
/// `f32` so that in-memory weights equal their checkpointed form.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, state: &mut OptState) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.first) {
        return Err(Error::shape("adam_step", "parameter, gradient and moment layouts differ"));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let moments = state.first.iter_mut().zip(state.second.iter_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            let mut pi = p.data[i];
            pi -= c.lr * c.weight_decay * pi;
            m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
            v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            pi -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            p.data[i] = pi as f32 as f64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Tensor;

    fn scalar(x: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_vec(&[1], vec![x]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut p = scalar(0.75);
        let g = p.zeros_like();
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut st = OptState::new(&p, cfg);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, scalar(0.75));
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.5);
        let g = scalar(1.0);
        let cfg = AdamConfig { lr: 1e-3, weight_decay: 0.0, ..AdamConfig::default() };
        let mut st = OptState::new(&p, cfg);
        adam_step(&mut p, &g, &mut st).unwrap();
        // m̂ = 1, v̂ = 1, Δ = −lr/(1+ε)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        let got = p.get("x").unwrap().data[0];
        assert!((got - expected).abs() <= 1e-7, "{got} vs {expected}");
    }

    #[test]
    fn decoupled_decay_shrinks_weights() {
        let mut p = scalar(2.0);
        let g = p.zeros_like();
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.5, ..AdamConfig::default() };
        let mut st = OptState::new(&p, cfg);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p.get("x").unwrap().data[0], 1.9f32 as f64);
    }

    #[test]
    fn identical_states_give_identical_updates() {
        let g = scalar(-0.3);
        let (mut a, mut b) = (scalar(1.0), scalar(1.0));
        let mut sa = OptState::new(&a, AdamConfig::default());
        let mut sb = sa.clone();
        for _ in 0..3 {
            adam_step(&mut a, &g, &mut sa).unwrap();
            adam_step(&mut b, &g, &mut sb).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let mut p = scalar(1.0);
        let mut st = OptState::new(&p, AdamConfig::default());
        let mut g = ParamStore::new();
        g.insert("y", Tensor::zeros(&[1])).unwrap();
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }
}
