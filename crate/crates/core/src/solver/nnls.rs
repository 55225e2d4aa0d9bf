//! Lawson-Hanson non-negative least squares.

use nalgebra::{DMatrix, DVector};

/// Solves `min ||A y - b||_2` subject to `y >= 0`.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut y = DVector::<f64>::zeros(n);
    if n == 0 {
        return y;
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * b.amax().max(1.0);
    let tol = 1e-13 * scale.max(1e-300) * (n as f64);
    let mut passive = vec![false; n];
    let mut w = a.transpose() * (b - a * &y);

    for _ in 0..3 * n + 10 {
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let s = passive_solve(a, b, &passive);
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > tol) {
                y = s;
                break;
            }
            let mut step = 1.0_f64;
            for i in 0..n {
                if passive[i] && s[i] <= tol {
                    let denom = y[i] - s[i];
                    if denom > 0.0 {
                        step = step.min(y[i] / denom);
                    }
                }
            }
            y += (s - &y) * step;
            for i in 0..n {
                if passive[i] && y[i] <= tol {
                    passive[i] = false;
                    y[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.transpose() * (b - a * &y);
    }
    y
}

fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let sub = DMatrix::<f64>::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut out = DVector::<f64>::zeros(a.ncols());
    for (c, &j) in cols.iter().enumerate() {
        out[j] = sol[c];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_nonnegative_combination() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let y = nnls(&a, &b);
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_negative_coefficients() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 4.0]);
        let y = nnls(&a, &b);
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let y = nnls(&a, &b);
        let r = &a * &y - &b;
        assert!(r.amax() < 1e-12);
        assert!(y.iter().all(|v| *v >= 0.0));
    }
}
