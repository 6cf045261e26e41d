//! Decomposable k-vectors in Λᵏℝⁿ.
//!
//! A [`Blade`] stores the coordinates of `v₁ ∧ ⋯ ∧ v_k` in the orthonormal
//! basis `e_{i₁} ∧ ⋯ ∧ e_{i_k}`, `i₁ < ⋯ < i_k`, ordered lexicographically.
//! The coordinate for a combination is the corresponding maximal minor of the
//! `n × k` matrix whose columns are the vectors, so the Euclidean norm of the
//! coordinate array is the k-dimensional volume of the parallelotope.

use thiserror::Error;

use crate::jets::Jet;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExteriorError {
    #[error("wedge needs 1 ≤ k ≤ n vectors, got k = {k} in dimension {n}")]
    Grade { k: usize, n: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All strictly increasing `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blade {
    n: usize,
    grade: usize,
    coords: Vec<f64>,
}

impl Blade {
    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.coords)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}

fn check_frame<T>(vectors: &[Vec<T>]) -> Result<(usize, usize), ExteriorError> {
    let k = vectors.len();
    let n = vectors.first().map_or(0, Vec::len);
    if k == 0 || k > n {
        return Err(ExteriorError::Grade { k, n });
    }
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != n) {
        return Err(ExteriorError::DimensionMismatch { index, got: v.len(), expected: n });
    }
    Ok((n, k))
}

/// `v₁ ∧ ⋯ ∧ v_k`; each minor is computed by Gaussian elimination.
pub fn wedge(vectors: &[Vec<f64>]) -> Result<Blade, ExteriorError> {
    let (n, k) = check_frame(vectors)?;
    let mut minor = vec![0.0; k * k];
    let coords = combinations(n, k)
        .iter()
        .map(|rows| {
            for (r, &row) in rows.iter().enumerate() {
                for (c, v) in vectors.iter().enumerate() {
                    minor[r * k + c] = v[row];
                }
            }
            linalg::det_in_place(&mut minor, k)
        })
        .collect();
    Ok(Blade { n, grade: k, coords })
}

pub fn blade_norm(b: &Blade) -> f64 {
    b.norm()
}

/// `det [⟨vᵢ, vⱼ⟩]`.
pub fn gram_determinant(vectors: &[Vec<f64>]) -> f64 {
    let k = vectors.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = linalg::dot(&vectors[i], &vectors[j]);
        }
    }
    linalg::det_in_place(&mut g, k)
}

/// Buffers for repeated `‖v₁ ∧ ⋯ ∧ v_k‖` evaluations of one fixed shape.
#[derive(Debug, Clone)]
pub struct WedgeNorm {
    n: usize,
    k: usize,
    combos: Vec<Vec<usize>>,
    minor: Vec<f64>,
}

impl WedgeNorm {
    pub fn new(n: usize, k: usize) -> Result<Self, ExteriorError> {
        if k == 0 || k > n {
            return Err(ExteriorError::Grade { k, n });
        }
        Ok(WedgeNorm { n, k, combos: combinations(n, k), minor: vec![0.0; k * k] })
    }

    /// `columns` holds the k vectors back to back (`columns[c·n + r]`).
    pub fn norm(&mut self, columns: &[f64]) -> f64 {
        let (n, k) = (self.n, self.k);
        debug_assert_eq!(columns.len(), n * k);
        let mut sum = 0.0;
        for rows in &self.combos {
            for (r, &row) in rows.iter().enumerate() {
                for c in 0..k {
                    self.minor[r * k + c] = columns[c * n + row];
                }
            }
            let d = linalg::det_in_place(&mut self.minor, k);
            sum += d * d;
        }
        sum.sqrt()
    }
}

/// Wedge of jet-valued vectors: each coordinate is the minor of the frame as
/// a truncated series in `t`, by cofactor expansion (no division, so frames
/// that are singular at `t = 0` are fine).
pub fn wedge_jets(vectors: &[Vec<Jet>]) -> Result<Vec<Jet>, ExteriorError> {
    let (n, k) = check_frame(vectors)?;
    let degree = vectors[0][0].degree();
    let cols: Vec<usize> = (0..k).collect();
    Ok(combinations(n, k)
        .iter()
        .map(|rows| cofactor_det(vectors, rows, &cols, degree))
        .collect())
}

fn cofactor_det(vectors: &[Vec<Jet>], rows: &[usize], cols: &[usize], degree: usize) -> Jet {
    if cols.len() == 1 {
        return vectors[cols[0]][rows[0]].clone();
    }
    // Expand along the first row.
    let mut acc = Jet::zero(degree);
    let sub_rows = &rows[1..];
    for (pos, &c) in cols.iter().enumerate() {
        let entry = &vectors[c][rows[0]];
        if entry.max_abs() == 0.0 {
            continue;
        }
        let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let term = entry * &cofactor_det(vectors, sub_rows, &sub_cols, degree);
        acc = if pos % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}
