use super::dense::Tensor;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; central differences on O(1) losses carry roughly 1e-11 of rounding
/// noise at the default step.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Outcome of [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares tape gradients of the scalar produced by `f` against central
/// differences, coordinate by coordinate.
///
/// `f` receives a fresh tape and one leaf per parameter and must return a
/// 1×1 value.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for pi in 0..work.len() {
        for ci in 0..work[pi].len() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[ci] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = rel_error(analytic[pi].data()[ci], numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((pi, ci));
                }
            }
        }
    }
    Ok(report)
}
