use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Elements whose gradient magnitude is below this are compared by
/// absolute error instead of relative error.
const REL_FLOOR: f64 = 1e-6;

/// Central-difference check of the gradients of a scalar function.
///
/// `f` records a computation on the tape from the given parameter leaves and
/// returns a `1×1` node.
pub fn grad_check<T, F>(f: F, params: &[Tensor2<T>], h: f64) -> Result<GradCheck>
where
    T: Real,
    F: for<'t> Fn(&mut Tape<'t, T>, &[Var]) -> Result<Var>,
{
    let analytic: Vec<Tensor2<T>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let loss = f(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter()
            .zip(params)
            .map(|(&v, p)| super::grad_or_zeros(&grads, v, p))
            .collect()
    };
    let eval = |ps: &[Tensor2<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant_ref(p)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(Error::Shape("grad_check needs a scalar function".into()));
        }
        Ok(v.data()[0].as_f64())
    };
    let mut work: Vec<Tensor2<T>> = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let x0 = params[pi].data()[ei];
            work[pi].data_mut()[ei] = x0 + T::of(h);
            let fp = eval(&work)?;
            work[pi].data_mut()[ei] = x0 - T::of(h);
            let fm = eval(&work)?;
            work[pi].data_mut()[ei] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[pi].data()[ei].as_f64();
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_error || !rel.is_finite() {
                report = GradCheck {
                    max_rel_error: rel,
                    worst: (pi, ei),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
