//! Weak-form discretization of `L = −(1/r)∂_r((1/r)∂_r) − (1/r²)∂_zz` and its
//! zero-Dirichlet inverse `K`.
//!
//! The bilinear form `⟨u, v⟩_H = ∫ (1/r) ∇u·∇v dr dz` is assembled cell by cell
//! on the dual grid with the coefficient `1/r` taken at face midpoints, so the
//! matrix is symmetric by construction and an M-matrix. The right-hand side of
//! `Lψ = ζ` becomes `ζ_k ν_k`, hence `L ψ ≈ (A ψ)_k / ν_k` at interior nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, NodeKind, ScalarField};
use crate::linalg::{pcg, CsrMatrix, EnvelopeCholesky, IncompleteCholesky, Jacobi, Preconditioner, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Complete envelope Cholesky when it fits in memory, incomplete Cholesky otherwise.
    #[default]
    Auto,
    Cholesky,
    IncompleteCholesky,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    /// Relative residual target `‖b − Aψ‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub backend: Backend,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            tol: 1e-10,
            max_iter: 20_000,
            backend: Backend::Auto,
        }
    }
}

// envelope entries allowed before Auto falls back to IC(0): about 800 MB
const MAX_ENVELOPE: usize = 100_000_000;

/// The assembled system over interior nodes plus the data to map fields in and out.
pub struct DiscreteOperator {
    grid: Grid,
    matrix: CsrMatrix,
    unknown_of: Vec<Option<usize>>,
    node_of: Vec<usize>,
    precond: Box<dyn Preconditioner>,
    backend: Backend,
    opts: LinearOptions,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("unknowns", &self.node_of.len())
            .field("nnz", &self.matrix.nnz())
            .field("backend", &self.backend)
            .finish()
    }
}

#[inline]
fn coupling_r(grid: &Grid, i: usize, j: usize) -> f64 {
    // face between r_i and r_{i+1}
    let r = grid.r();
    grid.dz()[j] / (0.5 * (r[i] + r[i + 1]) * (r[i + 1] - r[i]))
}

#[inline]
fn coupling_z(grid: &Grid, i: usize, j: usize) -> f64 {
    // face between z_j and z_{j+1}
    let z = grid.z();
    grid.dr()[i] / (grid.r()[i] * (z[j + 1] - z[j]))
}

/// Assembles the operator with default linear-solver options.
pub fn assemble(grid: &Grid) -> Result<DiscreteOperator> {
    assemble_with(grid, LinearOptions::default())
}

pub fn assemble_with(grid: &Grid, opts: LinearOptions) -> Result<DiscreteOperator> {
    let (nr, nz) = (grid.n_r(), grid.n_z());
    let mask = grid.mask();
    // number unknowns along the shorter direction first to keep the envelope narrow
    let order: Vec<usize> = if nz <= nr {
        (0..grid.len()).collect()
    } else {
        (0..nz).flat_map(|j| (0..nr).map(move |i| i * nz + j)).collect()
    };
    let mut unknown_of = vec![None; grid.len()];
    let mut node_of = Vec::new();
    for k in order {
        if mask[k] == NodeKind::Interior {
            unknown_of[k] = Some(node_of.len());
            node_of.push(k);
        }
    }
    if node_of.is_empty() {
        return Err(Error::SingularAssembly("grid has no interior nodes".into()));
    }
    if !grid.interior_connected() {
        return Err(Error::SingularAssembly("interior region not connected to any Dirichlet node".into()));
    }
    let mut rows = Vec::with_capacity(node_of.len());
    for &k in &node_of {
        let (i, j) = (k / nz, k % nz);
        let nbrs = [
            (k + nz, coupling_r(grid, i, j)),
            (k - nz, coupling_r(grid, i - 1, j)),
            (k + 1, coupling_z(grid, i, j)),
            (k - 1, coupling_z(grid, i, j - 1)),
        ];
        let mut diag = 0.0;
        let mut row = Vec::with_capacity(5);
        for (n, c) in nbrs {
            diag += c;
            if let Some(u) = unknown_of[n] {
                row.push((u, -c));
            }
        }
        row.push((unknown_of[k].unwrap(), diag));
        rows.push(row);
    }
    let matrix = CsrMatrix::from_rows(rows);
    let backend = match opts.backend {
        Backend::Auto => {
            if EnvelopeCholesky::envelope_size(&matrix) <= MAX_ENVELOPE {
                Backend::Cholesky
            } else {
                Backend::IncompleteCholesky
            }
        }
        b => b,
    };
    let precond: Box<dyn Preconditioner> = match backend {
        Backend::Cholesky => Box::new(EnvelopeCholesky::new(&matrix)?),
        Backend::IncompleteCholesky => Box::new(IncompleteCholesky::new(&matrix)?),
        Backend::Jacobi | Backend::Auto => Box::new(Jacobi::new(&matrix)),
    };
    Ok(DiscreteOperator {
        grid: grid.clone(),
        matrix,
        unknown_of,
        node_of,
        precond,
        backend,
        opts,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    pub fn unknowns(&self) -> usize {
        self.node_of.len()
    }
    pub fn backend(&self) -> Backend {
        self.backend
    }
    pub fn options(&self) -> LinearOptions {
        self.opts
    }
    /// Grid node of each unknown.
    pub fn nodes(&self) -> &[usize] {
        &self.node_of
    }
    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        self.unknown_of[node]
    }

    fn rhs(&self, zeta: &ScalarField) -> Vec<f64> {
        let nu = self.grid.nu();
        self.node_of.iter().map(|&k| zeta[k] * nu[k]).collect()
    }

    fn scatter(&self, x: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros_like(&self.grid);
        for (u, &k) in self.node_of.iter().enumerate() {
            out[k] = x[u];
        }
        out
    }

    /// Solves `A x = b` in unknown numbering.
    pub fn solve_raw(&self, b: &[f64], x: &mut [f64]) -> Result<SolveStats> {
        pcg(&self.matrix, b, x, self.precond.as_ref(), self.opts.tol, self.opts.max_iter)
    }

    /// `ψ_K = K ζ`: the discrete weak solution with zero Dirichlet data.
    pub fn apply_k(&self, zeta: &ScalarField) -> Result<ScalarField> {
        self.apply_k_warm(zeta, None).map(|(psi, _)| psi)
    }

    /// As [`apply_k`](Self::apply_k), warm-started from a previous solution.
    pub fn apply_k_warm(&self, zeta: &ScalarField, warm: Option<&ScalarField>) -> Result<(ScalarField, SolveStats)> {
        if zeta.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::param("zeta", "non-finite vorticity"));
        }
        let b = self.rhs(zeta);
        let mut x: Vec<f64> = match warm {
            Some(w) => self.node_of.iter().map(|&k| w[k]).collect(),
            None => vec![0.0; b.len()],
        };
        let stats = self.solve_raw(&b, &mut x)?;
        Ok((self.scatter(&x), stats))
    }

    /// `(A ψ)` at interior nodes using the boundary values carried by `ψ`; zero elsewhere.
    pub fn apply_full(&self, psi: &ScalarField) -> ScalarField {
        let g = &self.grid;
        let nz = g.n_z();
        let mut out = ScalarField::zeros_like(g);
        for &k in &self.node_of {
            let (i, j) = (k / nz, k % nz);
            let ce = coupling_r(g, i, j);
            let cw = coupling_r(g, i - 1, j);
            let cn = coupling_z(g, i, j);
            let cs = coupling_z(g, i, j - 1);
            out[k] = ce * (psi[k] - psi[k + nz])
                + cw * (psi[k] - psi[k - nz])
                + cn * (psi[k] - psi[k + 1])
                + cs * (psi[k] - psi[k - 1]);
        }
        out
    }

    /// Discrete `L ψ` at interior nodes: `(A ψ)_k / ν_k`.
    pub fn apply_l(&self, psi: &ScalarField) -> ScalarField {
        let mut out = self.apply_full(psi);
        let nu = self.grid.nu();
        for &k in &self.node_of {
            out[k] /= nu[k];
        }
        out
    }

    /// H-dual norm of the weak-form defect `v ↦ ⟨ψ, v⟩_H − ∫ ζ v dν`, relative to the
    /// dual norm of `v ↦ ∫ ζ v dν` (absolute when that is zero).
    pub fn residual(&self, psi: &ScalarField, zeta: &ScalarField) -> Result<f64> {
        let a_psi = self.apply_full(psi);
        let b = self.rhs(zeta);
        let d: Vec<f64> = self.node_of.iter().zip(&b).map(|(&k, bk)| a_psi[k] - bk).collect();
        let dual = |v: &[f64]| -> Result<f64> {
            let mut x = vec![0.0; v.len()];
            self.solve_raw(v, &mut x)?;
            Ok(v.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>().max(0.0).sqrt())
        };
        let dn = dual(&d)?;
        let bn = dual(&b)?;
        Ok(if bn > 0.0 { dn / bn } else { dn })
    }

    /// `⟨u, v⟩_H` for fields vanishing off the interior.
    pub fn energy_pairing(&self, u: &ScalarField, v: &ScalarField) -> f64 {
        let au = self.apply_full(u);
        self.node_of.iter().map(|&k| au[k] * v[k]).sum()
    }
}

/// Replaces `f` by `(f(z) + f(−z)) / 2`, which is bitwise symmetric.
pub fn symmetrize_z(grid: &Grid, f: &mut ScalarField) {
    let nz = grid.n_z();
    for i in 0..grid.n_r() {
        for j in 0..nz / 2 {
            let (a, b) = (i * nz + j, i * nz + nz - 1 - j);
            let m = 0.5 * (f[a] + f[b]);
            f[a] = m;
            f[b] = m;
        }
    }
}
