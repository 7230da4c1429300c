//! Lawson–Hanson nonnegative least squares for the small cone-membership
//! problems behind `L = +∞` detection.

use nalgebra::{DMatrix, DVector};

/// `argmin ‖A q − b‖` over `q ≥ 0`.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let scale = 1.0 + a.amax() * b.amax();
    let tol = 1e-13 * scale;
    let mut passive = vec![false; n];
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let j = match pick {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[j] = true;
        for _ in 0..=n {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            if idx.is_empty() {
                break;
            }
            let ap = a.select_columns(&idx);
            let z = match ap.svd(true, true).solve(b, 1e-14) {
                Ok(z) => z,
                Err(_) => break,
            };
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= 1e-15 * scale {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}
