//! Sparse symmetric storage, preconditioners and preconditioned conjugate gradients.

use crate::error::{Error, Result};

/// Compressed sparse row matrix, both triangles stored, columns sorted per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col.len());
        }
        CsrMatrix { n, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col[a..b].binary_search(&j) {
            Ok(p) => self.val[a + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[p] * x[self.col[p]];
            }
            y[i] = s;
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

pub trait Preconditioner: Send + Sync {
    /// `z ≈ A⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Self {
        Jacobi {
            inv_diag: a.diagonal().iter().map(|d| 1.0 / d).collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Zero fill-in incomplete Cholesky. Exists for M-matrices, which the weak-form
/// assembly produces.
pub struct IncompleteCholesky {
    // strictly lower rows of L and the diagonal, CSR
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<f64>,
    // transpose pattern for the backward sweep
    t_ptr: Vec<usize>,
    t_col: Vec<usize>,
    t_val: Vec<f64>,
}

impl IncompleteCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let mut row_ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let start = col.len();
            let mut aii = 0.0;
            for (j, v) in a.row(i) {
                if j < i {
                    col.push(j);
                    val.push(v);
                } else if j == i {
                    aii = v;
                }
            }
            let end = col.len();
            for p in start..end {
                let j = col[p];
                // sparse dot of row i (cols < j) with row j
                let (mut s, mut q) = (0.0, row_ptr[j]);
                let qend = row_ptr[j + 1];
                for pp in start..p {
                    let c = col[pp];
                    while q < qend && col[q] < c {
                        q += 1;
                    }
                    if q < qend && col[q] == c {
                        s += val[pp] * val[q];
                    }
                }
                val[p] = (val[p] - s) / diag[j];
            }
            let s: f64 = val[start..end].iter().map(|v| v * v).sum();
            let d = aii - s;
            if !(d > 0.0) {
                return Err(Error::SingularAssembly(format!("incomplete Cholesky breakdown at row {i}")));
            }
            diag[i] = d.sqrt();
            row_ptr.push(end);
        }
        // transpose
        let mut counts = vec![0usize; n + 1];
        for &c in &col {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let t_ptr = counts.clone();
        let mut fill = counts;
        let mut t_col = vec![0; col.len()];
        let mut t_val = vec![0.0; col.len()];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let c = col[p];
                t_col[fill[c]] = i;
                t_val[fill[c]] = val[p];
                fill[c] += 1;
            }
        }
        Ok(IncompleteCholesky {
            row_ptr,
            col,
            val,
            diag,
            t_ptr,
            t_col,
            t_val,
        })
    }
}

impl Preconditioner for IncompleteCholesky {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = r[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s -= self.val[p] * z[self.col[p]];
            }
            z[i] = s / self.diag[i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.t_ptr[i]..self.t_ptr[i + 1] {
                s -= self.t_val[p] * z[self.t_col[p]];
            }
            z[i] = s / self.diag[i];
        }
    }
}

/// Complete Cholesky factor in envelope (skyline) storage.
///
/// With unknowns numbered along the short grid direction the envelope width is
/// one grid line, so the factor costs `n·w` memory and a solve `4·n·w` flops.
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Number of stored factor entries the envelope of `a` would need.
    pub fn envelope_size(a: &CsrMatrix) -> usize {
        (0..a.dim())
            .map(|i| i - a.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i) + 1)
            .sum()
    }

    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let mut first = vec![0; n];
        let mut start = vec![0; n + 1];
        for i in 0..n {
            first[i] = a.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i);
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut l = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let ri = start[i];
            for j in fi..i {
                let fj = first[j];
                let rj = start[j];
                let k0 = fi.max(fj);
                let mut s = l[ri + j - fi];
                let a_row = &l[ri + k0 - fi..ri + j - fi];
                let b_row = &l[rj + k0 - fj..rj + j - fj];
                for (x, y) in a_row.iter().zip(b_row) {
                    s -= x * y;
                }
                l[ri + j - fi] = s / l[rj + j - fj];
            }
            let row = &l[ri..ri + i - fi];
            let d = l[ri + i - fi] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::SingularAssembly(format!("Cholesky breakdown at row {i} (pivot {d:.3e})")));
            }
            l[ri + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { first, start, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.start[i];
            let mut s = x[i];
            for (k, lv) in (fi..i).zip(&self.l[ri..ri + i - fi]) {
                s -= lv * x[k];
            }
            x[i] = s / self.l[ri + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.start[i];
            x[i] /= self.l[ri + i - fi];
            let xi = x[i];
            for (k, lv) in (fi..i).zip(&self.l[ri..ri + i - fi]) {
                x[k] -= lv * xi;
            }
        }
    }
}

impl Preconditioner for EnvelopeCholesky {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for `A x = b`, warm-started from `x`.
///
/// Stops when `‖b − A x‖ ≤ tol · ‖b‖`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    m: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = a.dim();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = dot(&r, &r).sqrt() / bnorm;
    if res <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: res,
        });
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: res,
            });
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver {
        iterations: max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut row = vec![(i, 2.0)];
                    if i > 0 {
                        row.push((i - 1, -1.0));
                    }
                    if i + 1 < n {
                        row.push((i + 1, -1.0));
                    }
                    row
                })
                .collect(),
        )
    }

    #[test]
    fn all_preconditioners_reach_the_same_solution() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let chol = EnvelopeCholesky::new(&a).unwrap();
        let mut exact = b.clone();
        chol.solve_in_place(&mut exact);
        let precs: Vec<Box<dyn Preconditioner>> = vec![
            Box::new(Jacobi::new(&a)),
            Box::new(IncompleteCholesky::new(&a).unwrap()),
            Box::new(EnvelopeCholesky::new(&a).unwrap()),
        ];
        for m in &precs {
            let mut x = vec![0.0; 50];
            let st = pcg(&a, &b, &mut x, m.as_ref(), 1e-12, 500).unwrap();
            assert!(st.relative_residual <= 1e-12);
            for (u, v) in x.iter().zip(&exact) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ic0_is_exact_for_tridiagonal() {
        // no fill for a tridiagonal matrix, so one iteration suffices
        let a = laplacian_1d(20);
        let m = IncompleteCholesky::new(&a).unwrap();
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        let st = pcg(&a, &b, &mut x, &m, 1e-12, 5).unwrap();
        assert!(st.iterations <= 2);
    }

    #[test]
    fn reports_nonconvergence() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = pcg(&a, &b, &mut x, &Jacobi::new(&a), 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::LinearSolver { iterations: 3, .. }));
    }
}
