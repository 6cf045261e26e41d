//! Dense linear algebra for the small systems that appear here (dimension ≤ 8
//! or so). Matrices are row-major slices.

/// Determinant by Gaussian elimination with partial pivoting. `a` is
/// overwritten.
pub fn det_in_place(a: &mut [f64], k: usize) -> f64 {
    debug_assert_eq!(a.len(), k * k);
    let mut det = 1.0;
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))
            .unwrap();
        let pv = a[pivot * k + col];
        if pv == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..k {
                a.swap(pivot * k + c, col * k + c);
            }
            det = -det;
        }
        det *= pv;
        for r in col + 1..k {
            let f = a[r * k + col] / pv;
            if f != 0.0 {
                for c in col + 1..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
            }
        }
    }
    det
}

pub fn det(a: &[f64], k: usize) -> f64 {
    let mut m = a.to_vec();
    det_in_place(&mut m, k)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot is exactly zero or the result is not finite.
pub fn solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| m[i * k + col].abs().total_cmp(&m[j * k + col].abs()))?;
        let pv = m[pivot * k + col];
        if pv == 0.0 {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                m.swap(pivot * k + c, col * k + c);
            }
            x.swap(pivot, col);
        }
        for r in col + 1..k {
            let f = m[r * k + col] / pv;
            if f != 0.0 {
                for c in col..k {
                    m[r * k + c] -= f * m[col * k + c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for col in (0..k).rev() {
        let mut acc = x[col];
        for c in col + 1..k {
            acc -= m[col * k + c] * x[c];
        }
        x[col] = acc / m[col * k + col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Cholesky solve of a symmetric system; `None` unless positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= l[i * k + p] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= l[p * k + i] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    Some(y)
}

/// Least-squares solution of `A y ≈ b` for an `rows × cols` matrix given as
/// column vectors, by Householder QR. Returns the solution and the residual
/// norm `‖A y − b‖`, or `None` if `A` is rank deficient to working precision.
pub fn least_squares(columns: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let rows = b.len();
    let cols = columns.len();
    if cols > rows {
        return None;
    }
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = b.to_vec();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut diag = vec![0.0; cols];
    for j in 0..cols {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j + 1) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&rhs[j..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in rhs[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }
    let mut y = vec![0.0; cols];
    for j in (0..cols).rev() {
        let mut acc = rhs[j];
        for c in j + 1..cols {
            acc -= a[c][j] * y[c];
        }
        y[j] = acc / diag[j];
    }
    let residual = rhs[cols..].iter().map(|v| v * v).sum::<f64>().sqrt();
    Some((y, residual))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_with_pivoting() {
        assert_eq!(det(&[0.0, 1.0, 1.0, 0.0], 2), -1.0);
        assert!((det(&[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0], 3) - 18.0).abs() < 1e-12);
        assert_eq!(det(&[1.0, 2.0, 2.0, 4.0], 2), 0.0);
    }

    #[test]
    fn solves_small_systems() {
        let x = solve(&[0.0, 2.0, 1.0, 1.0], &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0]).is_none());
        let y = cholesky_solve(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0]).unwrap();
        assert!((4.0 * y[0] + 2.0 * y[1] - 2.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn least_squares_residual() {
        // Fit y = a over points (1, 2, 3): residual is the spread about the mean.
        let (y, r) = least_squares(&[vec![1.0, 1.0, 1.0]], &[1.0, 2.0, 3.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        let (y, r) = least_squares(&[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]], &[3.0, 2.0, 0.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 2.0).abs() < 1e-14 && r < 1e-14);
        assert!(least_squares(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 0.0]).is_none());
    }
}
