//! Adaptive-moment optimizer with bias correction, global-norm gradient
//! clipping, and the linear learning-rate schedule.

use super::params::{ParamGrads, ParameterSet};
use super::tensor::Scalar;
use super::NnError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Default cap applied by the trainers before stepping.
pub const GRAD_CLIP_NORM: f64 = 10.0;

/// Apply one adaptive-moment update to every parameter named in `grads`.
///
/// The per-element arithmetic runs in f64 and is stored back in the
/// parameter scalar type. Errors on a non-finite gradient without
/// touching any parameter.
pub fn optimizer_step<S: Scalar>(
    params: &mut ParameterSet<S>,
    grads: &ParamGrads<S>,
    learning_rate: f64,
) -> Result<(), NnError> {
    if !(learning_rate >= 0.0) {
        return Err(NnError::Invalid(format!("learning rate must be >= 0, got {learning_rate}")));
    }
    for (name, grad) in grads.iter() {
        let param = params
            .param(name)
            .ok_or_else(|| NnError::MissingParam { name: name.to_string() })?;
        if grad.shape() != param.value.shape() {
            return Err(NnError::ShapeMismatch {
                layer: name.to_string(),
                kind: "gradient".into(),
                msg: format!("gradient {:?} vs parameter {:?}", grad.shape(), param.value.shape()),
            });
        }
        if !grad.is_finite() {
            return Err(NnError::NonFiniteGradient { name: name.to_string() });
        }
    }

    for (name, grad) in grads.iter() {
        let param = params.param_mut_no_version(name).expect("validated above");
        param.step += 1;
        let t = param.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let values = param.value.data_mut();
        let m1 = param.m1.data_mut();
        let m2 = param.m2.data_mut();
        for i in 0..values.len() {
            let g = grad.data()[i].to_f64().unwrap();
            let m = ADAM_BETA1 * m1[i].to_f64().unwrap() + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * m2[i].to_f64().unwrap() + (1.0 - ADAM_BETA2) * g * g;
            m1[i] = S::from(m).unwrap();
            m2[i] = S::from(v).unwrap();
            let update = learning_rate * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
            values[i] = S::from(values[i].to_f64().unwrap() - update).unwrap();
        }
    }
    params.bump_version();
    Ok(())
}

/// Scale all gradients so their joint Euclidean norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut ParamGrads<S>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(S::from(max_norm / norm).unwrap());
    }
    norm
}

/// Linearly decayed learning rate: `base_lr * (1 - step/total_steps)`,
/// clamped to zero past the end of training.
pub fn linear_lr(step: u64, total_steps: u64, base_lr: f64) -> f64 {
    assert!(total_steps > 0, "total_steps must be positive");
    if step >= total_steps {
        return 0.0;
    }
    base_lr * (1.0 - step as f64 / total_steps as f64)
}
