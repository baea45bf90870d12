//! Sparse real matrices and spectral norms.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Dense solver below this size, Lanczos above.
pub const DENSE_LIMIT: usize = 512;
const LANCZOS_MAX_STEPS: usize = 1000;
const LANCZOS_TOL: f64 = 1e-9;
const LANCZOS_SEED: u64 = 0x5eed;

/// Row-major sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix { n_rows, n_cols, rows: vec![Vec::new(); n_rows] }
    }

    /// Adds `v` to entry (i, j).
    pub fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => row[k].1 += v,
            Err(k) => row.insert(k, (j, v)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = SparseMatrix::zeros(self.n_cols, self.n_rows);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                t.rows[j].push((i, v));
            }
        }
        t
    }

    pub fn mul(&self, o: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.n_cols, o.n_rows);
        let mut out = SparseMatrix::zeros(self.n_rows, o.n_cols);
        for (i, r) in self.rows.iter().enumerate() {
            let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
            for &(k, a) in r {
                for &(j, b) in &o.rows[k] {
                    *acc.entry(j).or_insert(0.0) += a * b;
                }
            }
            out.rows[i] = acc.into_iter().filter(|&(_, v)| v != 0.0).collect();
        }
        out
    }

    pub fn axpy(&self, alpha: f64, o: &SparseMatrix) -> SparseMatrix {
        let mut out = self.clone();
        for (i, r) in o.rows.iter().enumerate() {
            for &(j, v) in r {
                out.add_entry(i, j, alpha * v);
            }
        }
        out
    }

    pub fn sub(&self, o: &SparseMatrix) -> SparseMatrix {
        self.axpy(-1.0, o)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|e| e.1.abs()))
            .fold(0.0, f64::max)
    }

    /// sqrt(‖A‖₁‖A‖∞), an upper bound for the spectral norm.
    pub fn schur_bound(&self) -> f64 {
        let row_max = self
            .rows
            .iter()
            .map(|r| r.iter().map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut cols = vec![0.0; self.n_cols];
        for r in &self.rows {
            for &(j, v) in r {
                cols[j] += v.abs();
            }
        }
        let col_max = cols.into_iter().fold(0.0, f64::max);
        (row_max * col_max).sqrt()
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    /// Upper bound sqrt(‖A‖₁‖A‖∞).
    pub upper: f64,
    pub method: &'static str,
    pub iterations: usize,
}

/// Largest singular value: dense SVD up to `DENSE_LIMIT`, otherwise Lanczos
/// on AᵀA with full reorthogonalisation from a seeded start vector.
pub fn spectral_norm(a: &SparseMatrix) -> NormEstimate {
    let upper = a.schur_bound();
    if a.nnz() == 0 {
        return NormEstimate { value: 0.0, upper, method: "zero", iterations: 0 };
    }
    if a.n_rows.max(a.n_cols) <= DENSE_LIMIT {
        let sv = a.to_dense().singular_values();
        let value = sv.iter().copied().fold(0.0, f64::max);
        return NormEstimate { value, upper, method: "dense-svd", iterations: 0 };
    }
    let (lmax, it) = lanczos_largest(|x| a.matvec_t(&a.matvec(x)), a.n_cols);
    NormEstimate { value: lmax.max(0.0).sqrt(), upper, method: "lanczos", iterations: it }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
pub fn lanczos_largest<F: Fn(&[f64]) -> Vec<f64>>(op: F, n: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    let steps = LANCZOS_MAX_STEPS.min(n);
    for k in 0..steps {
        let mut w = op(&basis[k]);
        let alpha = dot(&w, &basis[k]);
        alphas.push(alpha);
        // full reorthogonalisation, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = dot(&w, &w).sqrt();
        let converged_check = k % 5 == 4 || beta < 1e-12 || k + 1 == steps;
        if converged_check {
            let top = tridiagonal_top(&alphas, &betas);
            if beta < 1e-12 || k + 1 == steps || (top - last).abs() <= LANCZOS_TOL * top.abs().max(1e-300) {
                return (top, k + 1);
            }
            last = top;
        }
        betas.push(beta);
        for wi in w.iter_mut() {
            *wi /= beta;
        }
        basis.push(w);
    }
    (tridiagonal_top(&alphas, &betas), steps)
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_top(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..k {
        let r = if i > 0 { betas[i - 1].abs() } else { 0.0 } + if i + 1 < k { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| {
        let mut c = 0usize;
        let mut d = 1.0f64;
        for i in 0..k {
            let b2 = if i > 0 { betas[i - 1] * betas[i - 1] } else { 0.0 };
            d = alphas[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn symmetric_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift_sum(n: usize) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(n, n);
        for i in 0..n {
            if i + 1 < n {
                m.add_entry(i, i + 1, 1.0);
                m.add_entry(i + 1, i, 1.0);
            }
        }
        m
    }

    #[test]
    fn tridiagonal_shift_norms() {
        for n in [10usize, 100, 600, 2000] {
            let est = spectral_norm(&shift_sum(n));
            let closed = 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((est.value - closed).abs() < 1e-6, "{n}: {} vs {closed}", est.value);
            assert!(est.upper >= est.value - 1e-12);
        }
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let mut m = SparseMatrix::zeros(n, n);
        for i in 0..n {
            for d in 0..3 {
                m.add_entry(i, (i + d * 7) % n, rng.gen_range(-1.0..1.0));
            }
        }
        let dense = spectral_norm(&m).value;
        let (l, _) = lanczos_largest(|x| m.matvec_t(&m.matvec(x)), n);
        assert!((dense - l.sqrt()).abs() < 1e-6 * dense);
    }

    #[test]
    fn submultiplicative() {
        let a = shift_sum(50);
        let b = a.mul(&a);
        assert!(spectral_norm(&b).value <= spectral_norm(&a).value.powi(2) + 1e-9);
    }
}
