use super::{shape_err, NeuralError};

/// Denominator floor for the relative error, so coordinates where both
/// gradients are essentially zero are judged on absolute difference.
pub const DEFAULT_REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` to central differences of `f` around `params`,
/// coordinate by coordinate. The relative error at a coordinate is
/// `|a - n| / max(|a|, |n|, DEFAULT_REL_FLOOR)`.
pub fn grad_check<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport, NeuralError>
where
    F: Fn(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(shape_err(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(NeuralError::InvalidArgument(format!("eps {eps} must be positive")));
    }
    let mut theta = params.to_vec();
    let base = f(&theta);
    if !base.is_finite() {
        return Err(NeuralError::NonFinite(format!("objective is {base} at the base point")));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
    };
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = f(&theta);
        theta[i] = orig - eps;
        let minus = f(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NeuralError::NonFinite(format!(
                "objective is not finite around coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DEFAULT_REL_FLOOR);
        if rel > report.max_rel_error || i == 0 {
            report = GradCheckReport {
                max_rel_error: rel.max(report.max_rel_error),
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}
