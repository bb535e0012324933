use super::model::ModelParams;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale of
/// `REL_FLOOR` rather than relative to their own magnitude.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `block[index]` of the parameter with the largest error.
    pub worst_param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences, parameter by parameter.
pub fn grad_check<F>(params: &ModelParams, loss_fn: F, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, Vec<f64>)>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("grad_check epsilon must be positive"));
    }
    let (_, analytic) = loss_fn(params)?;
    if analytic.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient of length {} for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let blocks = params.config().blocks();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        let (up, _) = loss_fn(&probe)?;
        probe.data[i] = orig - epsilon;
        let (down, _) = loss_fn(&probe)?;
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if err > report.max_rel_err || report.worst_param.is_empty() {
            let b = blocks.iter().find(|b| b.range().contains(&i)).unwrap();
            report.max_rel_err = err;
            report.worst_param = format!("{}[{}]", b.name, i - b.offset);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
