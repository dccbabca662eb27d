use serde::{Deserialize, Serialize};

use crate::diffcore::DenseMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: `θ ← θ − lr·weight_decay·θ` before each Adam update.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper {
            lr: 0.008,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 20,
        }
    }
}

impl OptimHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("eps must be positive and weight_decay non-negative"));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience and max_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// First and second moments, shaped like the parameters they track.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'p>(params: impl IntoIterator<Item = &'p DenseMatrix>) -> Self {
        let m: Vec<DenseMatrix> = params.into_iter().map(|p| DenseMatrix::zeros(p.dim())).collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// Decoupled weight decay, then a bias-corrected Adam update of every entry.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[DenseMatrix],
    state: &mut AdamState,
    hyper: &OptimHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() || p.dim() != state.m[i].dim() {
            return Err(Error::shape("adam_step", format!("tensor {i}: {:?} vs grad {:?}", p.dim(), g.dim())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let decay = 1.0 - hyper.lr * hyper.weight_decay;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        ndarray::Zip::from(&mut **p)
            .and(g)
            .and(&mut state.m[i])
            .and(&mut state.v[i])
            .for_each(|theta, &g, m, v| {
                *theta *= decay;
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = array![[1.0, -2.0]];
        let hyper = OptimHyper { weight_decay: 0.0, ..Default::default() };
        let mut state = AdamState::new([&p]);
        for _ in 0..3 {
            adam_step(&mut [&mut p], &[Array2::zeros((1, 2))], &mut state, &hyper).unwrap();
        }
        assert_eq!(p, array![[1.0, -2.0]]);
        assert_eq!(state.m[0], Array2::<f64>::zeros((1, 2)));
        assert_eq!(state.step, 3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Array2::from_elem((2, 3), 0.5);
        let hyper = OptimHyper { weight_decay: 0.0, ..Default::default() };
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Array2::ones((2, 3))], &mut state, &hyper).unwrap();
        let want = 0.5 - hyper.lr / (1.0 + hyper.eps);
        for &v in &p {
            assert!((v - want).abs() < 1e-15, "{v} vs {want}");
        }
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = array![[2.0]];
        let hyper = OptimHyper { lr: 0.1, weight_decay: 0.5, ..Default::default() };
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[array![[0.0]]], &mut state, &hyper).unwrap();
        assert!((p[[0, 0]] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let run = || {
            let mut p = array![[0.3, 0.1], [-0.2, 0.7]];
            let mut state = AdamState::new([&p]);
            for k in 0..5 {
                let g = p.mapv(|v| v * k as f64 - 0.1);
                adam_step(&mut [&mut p], &[g], &mut state, &OptimHyper::default()).unwrap();
            }
            (p, state)
        };
        assert_eq!(run(), run());

        let mut p = array![[1.0]];
        let mut state = AdamState::new([&p]);
        assert!(adam_step(&mut [&mut p], &[array![[1.0, 2.0]]], &mut state, &OptimHyper::default()).is_err());
    }

    #[test]
    fn hyper_validation() {
        OptimHyper::default().validate().unwrap();
        assert!(OptimHyper { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(OptimHyper { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(OptimHyper { patience: 0, ..Default::default() }.validate().is_err());
    }
}
