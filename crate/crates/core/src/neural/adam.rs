use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{shape_err, NeuralError, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators with the same layout as the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub t: u64,
}

impl<P: Parameters + Clone> AdamState<P> {
    pub fn new(params: &P) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place. Weight decay, when non-zero, is
/// added to the gradient (L2 form).
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<P>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(), NeuralError> {
    let n = params.param_count();
    if grads.param_count() != n || state.m.param_count() != n || state.v.param_count() != n {
        return Err(shape_err(format!(
            "adam: {} parameters, {} gradients, {} state entries",
            n,
            grads.param_count(),
            state.m.param_count()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let grad_tensors = grads.tensors();
    let params_mut = params.tensors_mut();
    let m_mut = state.m.tensors_mut();
    let v_mut = state.v.tensors_mut();
    for (((mut p, (_, g)), mut m), mut v) in params_mut.into_iter().zip(grad_tensors).zip(m_mut).zip(v_mut) {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(shape_err(format!(
                "adam: tensor shape {:?} vs {:?}",
                p.shape(),
                g.shape()
            )));
        }
        Zip::from(&mut p)
            .and(&g)
            .and(&mut m)
            .and(&mut v)
            .for_each(|p, &g, m, v| {
                let g = g + cfg.weight_decay * *p;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
    Ok(())
}
