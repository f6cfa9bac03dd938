//! Newton directions on a face of the simplex.

use nalgebra::{DMatrix, DVector};

/// Solves `H·v + μ·1 = g`, `Σ v = 0` for a positive semi-definite `H`.
///
/// `H` is regularized relative to its own diagonal, so coordinates whose
/// curvature differs by many orders of magnitude do not swamp each other.
pub(crate) fn face_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let m = h.nrows();
    let floor = h.diagonal().max() * f64::EPSILON;
    let ones = DVector::from_element(m, 1.0);
    let mut lambda = 1e-12;
    let (a, b) = loop {
        let mut reg = h.clone();
        for i in 0..m {
            reg[(i, i)] += lambda * h[(i, i)].max(floor).max(f64::MIN_POSITIVE);
        }
        if let Some(chol) = reg.cholesky() {
            break (chol.solve(g), chol.solve(&ones));
        }
        lambda *= 1e3;
        if lambda > 1e6 {
            return None;
        }
    };
    let mu = a.sum() / b.sum();
    let v = a - b * mu;
    v.iter().all(|x| x.is_finite()).then_some(v)
}
