//! Adam over [`ModelParams`].

use crate::model::{Matrix, ModelParams};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One Adam update of `params` with gradients `grads` (same layout).
///
/// Non-finite gradients abort the step before anything is modified.
pub fn grad_step(params: &mut ModelParams, grads: &ModelParams, lr: f64, state: &mut AdamState) -> Result<()> {
    for (name, g) in grads.named_tensors() {
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name} at optimizer step {} (max |g| = {})",
                state.step + 1,
                g.max_abs()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Composition, ModelShape, ScoreFn};
    use rand::SeedableRng;

    fn params() -> ModelParams {
        let shape = ModelShape {
            n_entities: 3,
            n_relations: 1,
            dim: 2,
            layers: 1,
            fused: false,
            composition: Composition::Sub,
            activation: Activation::Tanh,
            score_fn: ScoreFn::TransEL1,
        };
        ModelParams::init(shape, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        grad_step(&mut p, &before.zeros_like(), 0.1, &mut st).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_moves_toward_zero() {
        let mut p = params();
        let mut st = AdamState::new(&p);
        let x0 = p.entity_emb.get(0, 0);
        for _ in 0..20 {
            let mut g = p.zeros_like();
            g.entity_emb.set(0, 0, 2.0 * p.entity_emb.get(0, 0));
            grad_step(&mut p, &g, 1e-2, &mut st).unwrap();
        }
        assert!(p.entity_emb.get(0, 0).abs() < x0.abs());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = p.zeros_like();
        g.layers[0].w_in.set(0, 0, f64::NAN);
        assert!(matches!(grad_step(&mut p, &g, 0.1, &mut st), Err(Error::Numeric(_))));
        assert_eq!(p, before);
    }
}
