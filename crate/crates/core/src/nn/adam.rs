//! Adam optimizer with bias correction.

use super::model::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First-moment estimates, mirroring the parameter order.
    pub m: Vec<Tensor>,
    /// Second-moment estimates.
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(lr: f64, params: &ModelParams) -> Self {
        let shapes: Vec<Vec<usize>> = params
            .named()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    /// One update step. The step counter increments before the update so
    /// bias correction at t=1 uses (1 - beta^1).
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        let mut named = params.named_mut();
        if named.len() != grads.len() || named.len() != self.m.len() {
            return Err(Error::config(format!(
                "adam: {} parameters, {} gradients, {} moment slots",
                named.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (name, p)) in named.iter_mut().enumerate() {
            let g = &grads[i];
            if g.shape() != p.shape() {
                return Err(Error::config(format!(
                    "adam: gradient shape {:?} does not match {name} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            for j in 0..pd.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                pd[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn tiny_params() -> ModelParams {
        let cfg = RunConfig {
            d: 4,
            n_heads: 2,
            d_embed: 4,
            t_max: 4,
            l_ast: 4,
            l_cfg: 4,
            l_dfg: 4,
            conv_kernels: 1,
            conv_kh: 2,
            conv_kw: 2,
            mlp_hidden: 2,
            ..RunConfig::default()
        };
        ModelParams::init(&cfg, Some(4), 1)
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        let mut adam = AdamState::new(0.1, &params);
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params, before);
        assert_eq!(adam.t, 1);
    }

    /// Hand evaluation of the update formulas for a single step with g=1:
    /// m_hat = 1, v_hat = 1, so the update is -lr / (1 + eps).
    #[test]
    fn first_step_with_unit_gradient_matches_hand_evaluation() {
        let mut params = tiny_params();
        let first_before = params.named()[0].1.data()[0];
        let grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| {
                let mut g = Tensor::zeros(t.shape());
                g.data_mut()[0] = 1.0;
                g
            })
            .collect();
        let lr = 0.01;
        let mut adam = AdamState::new(lr, &params);
        adam.step(&mut params, &grads).unwrap();
        let first_after = params.named()[0].1.data()[0];
        let expected = first_before - lr * 1.0 / (1.0 + 1e-8);
        assert!((first_after - expected).abs() < 1e-15);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut params = tiny_params();
            let mut adam = AdamState::new(0.01, &params);
            for step in 0..10u64 {
                let grads: Vec<Tensor> = params
                    .named()
                    .iter()
                    .map(|(_, t)| {
                        let mut g = Tensor::zeros(t.shape());
                        for (j, e) in g.data_mut().iter_mut().enumerate() {
                            *e = ((step as f64) + j as f64 * 0.1).sin();
                        }
                        g
                    })
                    .collect();
                adam.step(&mut params, &grads).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = tiny_params();
        let mut grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        grads[0] = Tensor::zeros(&[1]);
        let mut adam = AdamState::new(0.01, &params);
        assert!(adam.step(&mut params, &grads).is_err());
    }
}
