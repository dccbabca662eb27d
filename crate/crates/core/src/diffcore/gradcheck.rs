use super::DenseMatrix;
use crate::Result;

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn max_relative_error(analytic: &[DenseMatrix], numeric: &[DenseMatrix]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lists differ in length");
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            assert_eq!(a.dim(), n.dim(), "gradient shapes differ");
            a.iter().zip(n.iter()).map(|(&x, &y)| relative_error(x, y))
        })
        .fold(0.0, f64::max)
}

/// Central differences `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` for every entry
/// of every parameter matrix.
pub fn numeric_gradient<F>(mut f: F, params: &[DenseMatrix], step: f64) -> Result<Vec<DenseMatrix>>
where
    F: FnMut(&[DenseMatrix]) -> Result<f64>,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = DenseMatrix::zeros(params[p].dim());
        for idx in ndarray::indices(params[p].dim()) {
            let orig = work[p][idx];
            work[p][idx] = orig + step;
            let plus = f(&work)?;
            work[p][idx] = orig - step;
            let minus = f(&work)?;
            work[p][idx] = orig;
            grad[idx] = (plus - minus) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Worst relative error between `analytic` and central differences of `f`.
/// `f` must be deterministic (dropout off or masks frozen).
pub fn finite_diff_check<F>(f: F, params: &[DenseMatrix], analytic: &[DenseMatrix], step: f64) -> Result<f64>
where
    F: FnMut(&[DenseMatrix]) -> Result<f64>,
{
    let numeric = numeric_gradient(f, params, step)?;
    Ok(max_relative_error(analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn quadratic_at_three() {
        let g = numeric_gradient(|p| Ok(p[0][[0, 0]].powi(2)), &[array![[3.0]]], 1e-5).unwrap();
        assert!((g[0][[0, 0]] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 2e-9), 1e-9);
        assert_eq!(relative_error(100.0, 101.0), 1.0 / 101.0);
    }

    #[test]
    fn smooth_function_error_is_small() {
        let params = [array![[0.3, -0.7], [1.1, 0.2]]];
        let f = |p: &[DenseMatrix]| Ok(p[0].mapv(|v| v.sin() * v.exp()).sum());
        let analytic = [params[0].mapv(|v: f64| v.exp() * (v.sin() + v.cos()))];
        let err = finite_diff_check(f, &params, &analytic, 1e-5).unwrap();
        assert!(err < 1e-7, "{err}");
    }
}
