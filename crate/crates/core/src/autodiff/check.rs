use super::{Precision, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Step used by the verification suite.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Floor on the denominator of the relative error.
const REL_FLOOR: f64 = 1e-8;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences and returns the largest relative error over all components.
///
/// Both sides are evaluated on a double-precision tape. The numeric side uses
/// the five-point central stencil, whose O(step⁴) truncation error stays well
/// below the tolerance even where a component is small relative to the local
/// curvature.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let base: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();

    let eval = |values: &[Vec<f64>], track: bool| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::with_precision(Precision::Double);
        let vars: Vec<Var> = inputs
            .iter()
            .zip(values)
            .map(|(t, v)| tape.leaf_f64(t.shape().to_vec(), v.clone(), track))
            .collect();
        let out = f(&mut tape, &vars)?;
        if tape.values(out).len() != 1 {
            return Err(Error::invalid("grad_check needs a scalar-valued function"));
        }
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(&base, true)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = base.clone();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .values(*var)
            .ok_or_else(|| Error::invalid("input missing from gradient map"))?
            .to_vec();
        for i in 0..base[k].len() {
            let mut at = |offset: f64| -> Result<f64> {
                probe[k][i] = base[k][i] + offset;
                let (tape, _, out) = eval(&probe, false)?;
                probe[k][i] = base[k][i];
                tape.scalar(out)
            };
            // Fourth-order central stencil.
            let numeric = (at(-2.0 * step)? - 8.0 * at(-step)? + 8.0 * at(step)? - at(2.0 * step)?) / (12.0 * step);
            if !numeric.is_finite() {
                return Err(Error::NonFinite {
                    op: "grad_check".into(),
                });
            }
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new([2, 2], vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let err = grad_check(|t, v| t.sum(v), &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn rejects_vector_valued_function() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        assert!(grad_check(|t, v| t.tanh(v), &x, DEFAULT_STEP).is_err());
    }
}
