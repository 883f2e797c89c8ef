//! Adam with bias correction. Masked parameters are re-zeroed after every
//! step so a masked tap's (weight, m, v) triple never leaves 0.0.

use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, CoreError, CoreResult};
use crate::fmath;
use crate::nets::ParamSet;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor4>,
    v: Vec<Tensor4>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> CoreResult<Adam> {
        if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return arg_err("adam", "lr must be positive and betas in [0,1)");
        }
        let m = params.ids().map(|id| Tensor4::zeros(params.tensor(id).dims())).collect();
        let v = params.ids().map(|id| Tensor4::zeros(params.tensor(id).dims())).collect();
        Ok(Adam { cfg, t: 0, m, v })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor4]) -> CoreResult<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return shape_err("adam", "gradient list does not match parameter list");
        }
        self.t += 1;
        let bc1 = 1.0 - fmath::powf(self.cfg.beta1, self.t as f64);
        let bc2 = 1.0 - fmath::powf(self.cfg.beta2, self.t as f64);
        for (pi, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            if grads[pi].dims() != params.tensor(id).dims() {
                return shape_err("adam", "gradient dims differ from parameter dims");
            }
            {
                let m = self.m[pi].data_mut();
                let v = self.v[pi].data_mut();
                let g = grads[pi].data();
                let w = params.tensor_mut(id).data_mut();
                for i in 0..g.len() {
                    m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                    v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    w[i] -= self.cfg.lr * mhat / (fmath::sqrt(vhat) + self.cfg.eps);
                    if !w[i].is_finite() {
                        return Err(CoreError::NonFinite { op: "adam" });
                    }
                }
            }
            if let Some(mask) = params.mask(id).cloned() {
                mask.apply_to(params.tensor_mut(id));
                mask.apply_to(&mut self.m[pi]);
                mask.apply_to(&mut self.v[pi]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuecan::{build_mask, FillVariant, Orientation};
    use crate::tensor::Dims4;

    fn one_param(t: Tensor4) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w".into(), t);
        p
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut params = one_param(Tensor4::filled(Dims4::new(1, 1, 1, 3), 1.0));
        let mut adam = Adam::new(AdamConfig::with_lr(0.01), &params).unwrap();
        let g = Tensor4::from_vec(Dims4::new(1, 1, 1, 3), vec![0.3, -4.0, 1e-3]).unwrap();
        adam.step(&mut params, &[g]).unwrap();
        let id = params.find("w").unwrap();
        for (i, sign) in [(0usize, 1.0), (1, -1.0), (2, 1.0)] {
            let delta = params.tensor(id).data()[i] - 1.0;
            assert!((delta + sign * 0.01).abs() < 1e-4, "elem {i}: {delta}");
        }
    }

    #[test]
    fn zero_gradient_means_no_motion() {
        let mut params = one_param(Tensor4::filled(Dims4::new(1, 1, 1, 2), 0.7));
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &params).unwrap();
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor4::zeros(Dims4::new(1, 1, 1, 2))]).unwrap();
        }
        let id = params.find("w").unwrap();
        assert!(params.tensor(id).data().iter().all(|&w| w == 0.7));
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut params = one_param(Tensor4::scalar(-2.0));
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &params).unwrap();
        let id = params.find("w").unwrap();
        for _ in 0..300 {
            let w = params.tensor(id).data()[0];
            let g = Tensor4::scalar(2.0 * (w - 3.0));
            adam.step(&mut params, &[g]).unwrap();
        }
        let w = params.tensor(id).data()[0];
        assert!((w - 3.0).abs() < 1e-2, "ended at {w}");
    }

    #[test]
    fn masked_taps_pin_to_exact_zero_under_pressure() {
        let mask = build_mask(5, FillVariant::Center, Orientation::RowFill).unwrap();
        let mut w = Tensor4::filled(Dims4::new(5, 5, 2, 2), 0.25);
        mask.apply_to(&mut w);
        let mut params = ParamSet::new();
        let id = params.add_masked("fill.weight".into(), w, Some(mask.clone()));
        let mut adam = Adam::new(AdamConfig::with_lr(0.05), &params).unwrap();
        // gradients deliberately nonzero at masked taps: the optimizer must
        // cancel whatever lands there
        for step in 0..100 {
            let g = Tensor4::filled(Dims4::new(5, 5, 2, 2), 1.0 + step as f64 * 0.01);
            adam.step(&mut params, &[g]).unwrap();
        }
        let w = params.tensor(id);
        for ky in 0..5 {
            for kx in 0..5 {
                for i in 0..4 {
                    let v = w.data()[((ky * 5 + kx) * 2 + i / 2) * 2 + i % 2];
                    if mask.keeps(ky, kx) {
                        assert!(v != 0.25, "kept tap never moved");
                    } else {
                        assert_eq!(v.to_bits(), 0.0f64.to_bits(), "masked tap drifted");
                    }
                }
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut params = one_param(Tensor4::filled(Dims4::new(1, 2, 2, 1), 0.5));
            let mut adam = Adam::new(AdamConfig::with_lr(0.02), &params).unwrap();
            for i in 0..10 {
                let g = Tensor4::filled(Dims4::new(1, 2, 2, 1), (i as f64).sin());
                adam.step(&mut params, &[g]).unwrap();
            }
            let id = params.find("w").unwrap();
            params.tensor(id).data().to_vec()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
