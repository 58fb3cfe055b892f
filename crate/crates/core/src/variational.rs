//! Constrained energy maximization by a safeguarded bathtub fixed point.
//!
//! One step of the map `T` solves the linear elliptic problem for the current
//! vorticity, finds the flux constant `μ` that restores unit circulation, applies
//! the bathtub rule and Steiner-symmetrizes the result. `T` maximizes the energy
//! with its quadratic part linearized, so plain steps never lower the energy;
//! Anderson extrapolation speeds up the slow drift of the core position and is
//! kept only while the energy keeps increasing.

use std::collections::VecDeque;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::asymptotics;
use crate::diagnostics;
use crate::elliptic::{assemble_with, symmetrize_z, Backend, DiscreteOperator, LinearOptions};
use crate::error::{Error, Result};
use crate::geometry::{make_domain, make_refined_grid, DomainKind, Grid, GridSpec, Margins, NodeKind, Rect, ScalarField};

/// Smallest damping factor tried before an energy decrease is reported.
pub const MIN_THETA: f64 = 1.0 / 1024.0;

// iterations between estimates of the core drift velocity
const DRIFT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Swirl linearity: `a(t) = −α t`.
    pub alpha: f64,
    /// Core scale, in `(0, 1)`.
    pub beta: f64,
    /// Background flow coefficient; the ring translates at `W log(1/β)`.
    pub w: f64,
    /// Vorticity cap coefficient `Λ`; `None` selects [`default_cap`].
    pub cap: Option<f64>,
    /// Stop when `‖T(ζ) − ζ‖_{L¹(ν)}` drops below this.
    pub tol_fix: f64,
    /// Allowed circulation error in the multiplier search.
    pub tol_circ: f64,
    /// Relative residual of the linear solves.
    pub tol_lin: f64,
    pub max_iter: usize,
    /// Damping of plain steps, in `(0, 1]`.
    pub theta: f64,
    /// Anderson history length; 0 disables extrapolation.
    pub anderson_depth: usize,
    pub backend: Backend,
}

impl SolverParams {
    pub fn new(beta: f64, w: f64) -> Self {
        SolverParams {
            alpha: 0.0,
            beta,
            w,
            cap: None,
            tol_fix: 1e-7,
            tol_circ: 1e-9,
            tol_lin: 1e-10,
            max_iter: 4000,
            theta: 1.0,
            anderson_depth: 6,
            backend: Backend::Auto,
        }
    }

    pub fn log_inv_beta(&self) -> f64 {
        (1.0 / self.beta).ln()
    }

    pub fn cap(&self) -> f64 {
        self.cap.unwrap_or_else(|| default_cap(self.alpha, self.beta))
    }

    /// Largest admissible vorticity `Λ/β²`.
    pub fn zeta_max(&self) -> f64 {
        self.cap() / (self.beta * self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", "β must lie in (0,1)"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "α must be finite and nonnegative"));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::param("W", "W must be positive"));
        }
        let floor = (self.alpha * self.beta).max(1.0);
        if !(self.cap() > floor) {
            return Err(Error::param("lambda", format!("Λ must exceed max(αβ, 1) = {floor}")));
        }
        for (key, v) in [("tol_fix", self.tol_fix), ("tol_circ", self.tol_circ), ("tol_lin", self.tol_lin)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(key, "tolerance must lie in (0,1)"));
            }
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::param("theta", "damping must lie in (0,1]"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    /// Parameter combinations outside the regime where concentration is expected.
    pub fn regime_warnings(&self, kind: DomainKind, d: f64) -> Vec<String> {
        let mut out = Vec::new();
        match kind {
            DomainKind::Cylinder if self.w <= 1.0 / (4.0 * std::f64::consts::PI * d) => out.push(format!(
                "W = {} <= 1/(4 pi d) = {}: the core is expected at the wall, not inside the pipe",
                self.w,
                1.0 / (4.0 * std::f64::consts::PI * d)
            )),
            DomainKind::ExteriorBall if self.w >= 1.0 / (6.0 * std::f64::consts::PI * d) => out.push(format!(
                "W = {} >= 1/(6 pi d) = {}: the core is expected on the ball surface",
                self.w,
                1.0 / (6.0 * std::f64::consts::PI * d)
            )),
            _ => {}
        }
        out
    }
}

/// `Λ₀ = 10 · max(1, αβ)`.
pub fn default_cap(alpha: f64, beta: f64) -> f64 {
    10.0 * (alpha * beta).max(1.0)
}

/// Rectangle `{0 < r < r_max, |z| < z_max}` that the vorticity support must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub r_max: f64,
    pub z_max: f64,
}

impl SupportBox {
    /// The box for each geometry: the whole pipe (cut at `|z| < z_half`), the
    /// neighbourhood `{r < r* + 1, |z| < d + 1}` of the exterior ring, or the slab
    /// `{r < 1/(2πW)}` (cut at `|z| < z_half`) in the whole space.
    pub fn for_domain(kind: DomainKind, d: f64, w: f64, r_star: f64, z_half: Option<f64>) -> SupportBox {
        let slab = 1.0 / (2.0 * std::f64::consts::PI * w);
        match kind {
            DomainKind::Cylinder => SupportBox {
                r_max: d,
                z_max: z_half.unwrap_or(d),
            },
            DomainKind::ExteriorBall => SupportBox {
                r_max: r_star + 1.0,
                z_max: d + 1.0,
            },
            DomainKind::WholeSpace => SupportBox {
                r_max: slab,
                z_max: z_half.unwrap_or(slab),
            },
        }
    }

    pub fn rect(&self) -> Rect {
        Rect {
            r_max: self.r_max,
            z_max: self.z_max,
        }
    }

    pub fn contains(&self, r: f64, z: f64) -> bool {
        r > 0.0 && r < self.r_max && z.abs() < self.z_max
    }

    /// Interior grid nodes inside the box (and inside the domain).
    pub fn admissible(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.len())
            .map(|k| {
                let (r, z) = grid.coords(k);
                grid.mask()[k] == NodeKind::Interior && self.contains(r, z) && grid.domain().contains(r, z)
            })
            .collect()
    }
}

/// Irrotational part of the stream function, including the log(1/β) scaling.
pub fn background_stream(grid: &Grid, params: &SolverParams) -> ScalarField {
    let l = params.log_inv_beta();
    let w = params.w;
    let dom = grid.domain();
    let ball = dom.kind == DomainKind::ExteriorBall;
    let d3 = dom.d.powi(3);
    grid.field_from_fn(|r, z| {
        let r2 = r * r;
        let mut v = -0.5 * w * r2 * l;
        if ball && r2 > 0.0 {
            v += 0.5 * w * r2 * d3 / (r2 + z * z).powf(1.5) * l;
        }
        v
    })
}

#[inline]
fn bathtub_value(psi: f64, r2: f64, params: &SolverParams, zeta_max: f64) -> f64 {
    let ab = params.alpha * params.beta;
    if psi >= (params.cap() - ab) * r2 {
        zeta_max
    } else if psi > 0.0 {
        psi / (r2 * params.beta * params.beta) + params.alpha / params.beta
    } else {
        0.0
    }
}

fn bathtub_masked(grid: &Grid, psi: &ScalarField, params: &SolverParams, admissible: &[bool]) -> ScalarField {
    let zmax = params.zeta_max();
    let mut out = ScalarField::zeros_like(grid);
    for k in 0..grid.len() {
        if admissible[k] {
            let r = grid.coords(k).0;
            out[k] = bathtub_value(psi[k], r * r, params, zmax);
        }
    }
    out
}

/// The pointwise maximizer for a given stream function `ψ` (with `μ` already subtracted).
pub fn bathtub_update(grid: &Grid, psi: &ScalarField, params: &SolverParams, support: &SupportBox) -> ScalarField {
    bathtub_masked(grid, psi, params, &support.admissible(grid))
}

/// `∫ bathtub(ψ_free − μ) dν`.
pub fn circulation_given_mu(
    grid: &Grid,
    psi_free: &ScalarField,
    mu: f64,
    params: &SolverParams,
    support: &SupportBox,
) -> f64 {
    let shifted = psi_free.map(|v| v - mu);
    grid.integrate_nu(&bathtub_update(grid, &shifted, params, support))
}

#[derive(Debug, Clone)]
pub struct Multiplier {
    pub mu: f64,
    pub circulation: f64,
    /// Even `μ = 0` leaves circulation below 1, so the constraint is slack.
    pub unconstrained: bool,
    /// `bathtub(ψ_free − μ)`, with any fractional fill of the level set `ψ = 0`.
    pub zeta: ScalarField,
}

struct Candidate {
    node: usize,
    value: f64,
    r2: f64,
    nu: f64,
}

fn multiplier_masked(grid: &Grid, psi_free: &ScalarField, params: &SolverParams, admissible: &[bool]) -> Multiplier {
    let zmax = params.zeta_max();
    let nu = grid.nu();
    let cands: Vec<Candidate> = (0..grid.len())
        .filter(|&k| admissible[k] && psi_free[k] > 0.0)
        .map(|k| {
            let r = grid.coords(k).0;
            Candidate {
                node: k,
                value: psi_free[k],
                r2: r * r,
                nu: nu[k],
            }
        })
        .collect();
    let kappa = |mu: f64| -> f64 {
        cands
            .iter()
            .filter(|c| c.value > mu)
            .map(|c| bathtub_value(c.value - mu, c.r2, params, zmax) * c.nu)
            .sum()
    };
    let build = |mu: f64, fill: Option<(f64, f64)>| -> ScalarField {
        let mut z = ScalarField::zeros_like(grid);
        for c in &cands {
            if c.value > mu {
                z[c.node] = bathtub_value(c.value - mu, c.r2, params, zmax);
            } else if let Some((level, amount)) = fill {
                if c.value == level {
                    z[c.node] = amount;
                }
            }
        }
        z
    };
    let tol = params.tol_circ;
    let k0 = kappa(0.0);
    if k0 <= 1.0 + tol {
        let zeta = build(0.0, None);
        return Multiplier {
            mu: 0.0,
            circulation: k0,
            unconstrained: k0 < 1.0 - tol,
            zeta,
        };
    }
    // smallest μ with κ(μ) ≤ 1; κ is nonincreasing and vanishes at max ψ_free
    let mut lo = 0.0;
    let mut hi = cands.iter().map(|c| c.value).fold(0.0, f64::max);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if kappa(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k_hi = kappa(hi);
    if k_hi >= 1.0 - tol || params.alpha == 0.0 {
        return Multiplier {
            mu: hi,
            circulation: k_hi,
            unconstrained: false,
            zeta: build(hi, None),
        };
    }
    // κ jumps by α/β per node entering the support: sit on the entering level and
    // fill it fractionally (any value in [0, α/β] is optimal where ψ = 0)
    let level = cands
        .iter()
        .filter(|c| c.value > lo && c.value <= hi)
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    if !level.is_finite() {
        return Multiplier {
            mu: hi,
            circulation: k_hi,
            unconstrained: false,
            zeta: build(hi, None),
        };
    }
    let k_level = kappa(level);
    let top = params.alpha / params.beta;
    let capacity: f64 = cands.iter().filter(|c| c.value == level).map(|c| c.nu * top).sum();
    let amount = top * ((1.0 - k_level) / capacity).clamp(0.0, 1.0);
    let zeta = build(level, Some((level, amount)));
    let circulation = grid.integrate_nu(&zeta);
    Multiplier {
        mu: level,
        circulation,
        unconstrained: false,
        zeta,
    }
}

/// Flux constant restoring unit circulation: the smallest `μ ≥ 0` with
/// `|κ(μ) − 1| ≤ tol_circ`, or `μ = 0` flagged unconstrained when `κ(0) < 1`.
pub fn solve_multiplier(grid: &Grid, psi_free: &ScalarField, params: &SolverParams, support: &SupportBox) -> Multiplier {
    multiplier_masked(grid, psi_free, params, &support.admissible(grid))
}

/// Energy `½∫ζ ψ_K dν + ∫ζ ψ_bg dν − (β²/2)∫r²(ζ − α/β)₊² dν`, where `ψ_bg` is the
/// background stream function (which carries the translation and, outside a ball,
/// the dipole correction).
pub fn energy(grid: &Grid, params: &SolverParams, zeta: &ScalarField, psi_k: &ScalarField) -> f64 {
    let bg = background_stream(grid, params);
    energy_with(grid, params, zeta, psi_k, &bg)
}

fn energy_with(grid: &Grid, params: &SolverParams, zeta: &ScalarField, psi_k: &ScalarField, bg: &ScalarField) -> f64 {
    let nu = grid.nu();
    let shift = params.alpha / params.beta;
    let b2 = params.beta * params.beta;
    let mut e = 0.0;
    for k in 0..grid.len() {
        let z = zeta[k];
        if z == 0.0 {
            continue;
        }
        let r = grid.coords(k).0;
        let ex = (z - shift).max(0.0);
        e += nu[k] * (0.5 * z * psi_k[k] + z * bg[k] - 0.5 * b2 * r * r * ex * ex);
    }
    e
}

/// Per-row symmetric-decreasing rearrangement in `z`, cell-averaged so that it
/// preserves `∫ζ dν` exactly on nonuniform grids.
///
/// Rows whose admissible set has a gap around `z = 0` (below an excluded ball) are
/// rearranged toward the gap.
pub fn steiner_symmetrize(grid: &Grid, support: &SupportBox, zeta: &ScalarField) -> ScalarField {
    steiner_masked(grid, zeta, &support.admissible(grid))
}

fn steiner_masked(grid: &Grid, zeta: &ScalarField, admissible: &[bool]) -> ScalarField {
    let nz = grid.n_z();
    let mid = grid.z_mid();
    let dz = grid.dz();
    let mut out = ScalarField::zeros_like(grid);
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut upper: Vec<usize> = Vec::new();
    for i in 0..grid.n_r() {
        let base = i * nz;
        levels.clear();
        upper.clear();
        let mut any = false;
        for j in 0..nz {
            if admissible[base + j] {
                levels.push((zeta[base + j], dz[j]));
                any |= zeta[base + j] != 0.0;
            }
        }
        if !any {
            continue;
        }
        levels.sort_by(|a, b| b.0.total_cmp(&a.0));
        upper.extend((mid + 1..nz).filter(|&j| admissible[base + j]));
        let centre = admissible[base + mid];
        // half-line coordinate s: the centre cell covers [0, dz/2], then the upper cells in order
        let mut cells: Vec<(usize, f64, f64)> = Vec::with_capacity(upper.len() + 1);
        let mut s = 0.0;
        if centre {
            cells.push((mid, 0.0, 0.5 * dz[mid]));
            s = 0.5 * dz[mid];
        }
        for &j in &upper {
            cells.push((j, s, s + dz[j]));
            s += dz[j];
        }
        // level t occupies the half-line interval [c_{t-1}/2, c_t/2]
        let mut li = 0;
        let mut lstart = 0.0;
        for &(j, a, b) in &cells {
            let mut acc = 0.0;
            let mut pos = a;
            while pos < b && li < levels.len() {
                let lend = lstart + 0.5 * levels[li].1;
                let seg_end = lend.min(b);
                if seg_end > pos {
                    acc += levels[li].0 * (seg_end - pos);
                    pos = seg_end;
                }
                if lend <= b {
                    li += 1;
                    lstart = lend;
                } else {
                    break;
                }
            }
            let v = acc / (b - a);
            out[base + j] = v;
            if j != mid {
                out[base + nz - 1 - j] = v;
            }
        }
    }
    out
}

/// Uniform disc centred at `(a, 0)` with unit circulation. The radius is
/// `max(β/√(aπ), β)`: the first keeps the level at `1/β²`, the floor keeps large-radius
/// starts resolved.
pub fn initial_guess(grid: &Grid, params: &SolverParams, support: &SupportBox, a: f64) -> Result<ScalarField> {
    if !support.contains(a, 0.0) || !grid.domain().contains(a, 0.0) {
        return Err(Error::param("initial_radius", format!("{a} lies outside the support box")));
    }
    let rho = (params.beta / (a * std::f64::consts::PI).sqrt()).max(params.beta);
    let admissible = support.admissible(grid);
    let b2 = params.beta * params.beta;
    let mut zeta = ScalarField::zeros_like(grid);
    let mut count = 0;
    for k in 0..grid.len() {
        let (r, z) = grid.coords(k);
        if admissible[k] && (r - a).powi(2) + z * z < rho * rho {
            zeta[k] = 1.0 / b2;
            count += 1;
        }
    }
    if count < 12 {
        return Err(Error::Unresolved(format!(
            "the initial disc of radius {rho:.3e} covers {count} nodes (need at least 12); refine the grid near r = {a}"
        )));
    }
    let mass = grid.integrate_nu(&zeta);
    Ok(zeta.map(|v| v / mass))
}

/// `ν`-measure of the set where the cap `Λ/β²` is attained.
pub fn cap_activity(grid: &Grid, params: &SolverParams, zeta: &ScalarField) -> f64 {
    let top = params.zeta_max();
    let nu = grid.nu();
    (0..grid.len()).filter(|&k| zeta[k] >= top).map(|k| nu[k]).sum()
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Vorticity `bathtub(ψ_free − μ)`; satisfies the optimality conditions exactly.
    pub zeta: ScalarField,
    /// `ψ = Kζ + ψ_bg − μ` evaluated at the final iterate.
    pub psi: ScalarField,
    /// Swirl `ψ₊ / β`.
    pub xi: ScalarField,
    /// `Kζ` of the final iterate.
    pub psi_k: ScalarField,
    pub mu: f64,
    pub energy: f64,
    pub circulation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub unconstrained: bool,
    pub cap_active_measure: f64,
    /// Last `‖T(ζ) − ζ‖_{L¹(ν)}`.
    pub fix_residual: f64,
    pub theta: f64,
    pub energy_trace: Vec<f64>,
    /// The run stopped because the core left the drift window.
    pub left_window: bool,
}

/// A discretized problem: grid, operator, support mask and background flow.
pub struct Problem {
    params: SolverParams,
    support: SupportBox,
    op: DiscreteOperator,
    admissible: Vec<bool>,
    background: ScalarField,
    window: Option<(f64, f64)>,
}

struct Eval {
    psi_k: ScalarField,
    psi_free: ScalarField,
    mult: Multiplier,
    energy: f64,
    /// `T(ζ)`: the symmetrized, renormalized bathtub output.
    next: ScalarField,
}

impl Problem {
    pub fn new(params: SolverParams, grid: &Grid, support: SupportBox) -> Result<Problem> {
        params.validate()?;
        let op = assemble_with(
            grid,
            LinearOptions {
                tol: params.tol_lin,
                backend: params.backend,
                ..LinearOptions::default()
            },
        )?;
        let admissible = support.admissible(grid);
        if !admissible.iter().any(|&a| a) {
            return Err(Error::InvalidGrid("no grid node lies inside the support box".into()));
        }
        let background = background_stream(grid, &params);
        Ok(Problem {
            params,
            support,
            op,
            admissible,
            background,
            window: None,
        })
    }

    /// Stops [`Problem::iterate`] early once the core's radial centre is farther than
    /// `limit` from `center`, so the caller can rebuild a grid around it.
    pub fn with_drift_window(mut self, center: f64, limit: f64) -> Self {
        self.window = Some((center, limit));
        self
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }
    pub fn params(&self) -> &SolverParams {
        &self.params
    }
    pub fn support(&self) -> &SupportBox {
        &self.support
    }
    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }
    pub fn background(&self) -> &ScalarField {
        &self.background
    }

    /// `Kζ` made exactly even in `z`.
    pub fn apply_k(&self, zeta: &ScalarField, warm: Option<&ScalarField>) -> Result<ScalarField> {
        let (mut psi, _) = self.op.apply_k_warm(zeta, warm)?;
        symmetrize_z(self.grid(), &mut psi);
        Ok(psi)
    }

    /// Clamps to the admissible range, symmetrizes and restores unit circulation.
    fn project(&self, v: &ScalarField) -> ScalarField {
        let top = self.params.zeta_max();
        let mut c = v.clone();
        for (k, x) in c.as_mut_slice().iter_mut().enumerate() {
            *x = if self.admissible[k] { x.clamp(0.0, top) } else { 0.0 };
        }
        let mut s = steiner_masked(self.grid(), &c, &self.admissible);
        let mass = self.grid().integrate_nu(&s);
        if mass > 0.0 {
            for x in s.as_mut_slice() {
                *x = (*x / mass).min(top);
            }
        }
        s
    }

    fn evaluate(&self, zeta: &ScalarField, warm: Option<&ScalarField>) -> Result<Eval> {
        let grid = self.grid();
        let psi_k = self.apply_k(zeta, warm)?;
        let energy = energy_with(grid, &self.params, zeta, &psi_k, &self.background);
        let mut psi_free = psi_k.clone();
        for (p, b) in psi_free.as_mut_slice().iter_mut().zip(self.background.as_slice()) {
            *p += b;
        }
        let mult = multiplier_masked(grid, &psi_free, &self.params, &self.admissible);
        let next = if mult.unconstrained {
            steiner_masked(grid, &mult.zeta, &self.admissible)
        } else {
            self.project(&mult.zeta)
        };
        Ok(Eval {
            psi_k,
            psi_free,
            mult,
            energy,
            next,
        })
    }

    fn l1(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        let nu = self.grid().nu();
        (0..a.as_slice().len()).map(|k| (a[k] - b[k]).abs() * nu[k]).sum()
    }

    /// Node range `[lo, hi]` of the uniformly spaced r-run holding the support of `zeta`,
    /// together with the first and last occupied rows.
    fn uniform_run(&self, zeta: &ScalarField) -> Option<(usize, usize, usize, usize)> {
        let grid = self.grid();
        let (nr, nz) = (grid.n_r(), grid.n_z());
        let rows: Vec<usize> = (0..nr)
            .filter(|&i| (0..nz).any(|j| zeta[grid.idx(i, j)] > 0.0))
            .collect();
        let (&first, &last) = (rows.first()?, rows.last()?);
        let r = grid.r();
        let h = r[first + 1] - r[first];
        let same = |i: usize| ((r[i + 1] - r[i]) - h).abs() <= 1e-9 * h;
        let mut lo = first;
        while lo > 0 && same(lo - 1) {
            lo -= 1;
        }
        let mut hi = first;
        while hi + 1 < nr && same(hi) {
            hi += 1;
        }
        (hi >= last).then_some((lo, hi, first, last))
    }

    /// Moves `zeta` by `cells` whole rows in r, projected back onto the admissible set.
    fn shifted(&self, zeta: &ScalarField, cells: isize) -> ScalarField {
        let grid = self.grid();
        let (nr, nz) = (grid.n_r(), grid.n_z());
        let mut out = ScalarField::zeros(nr, nz);
        for i in 0..nr {
            let src = i as isize - cells;
            if src < 0 || src >= nr as isize {
                continue;
            }
            for j in 0..nz {
                out[grid.idx(i, j)] = zeta[grid.idx(src as usize, j)];
            }
        }
        self.project(&out)
    }

    /// Line search over whole-cell radial translations of the core in the direction
    /// `dir`: 1, 2, 4, … cells while the energy rises, then a rounded parabolic refinement.
    /// Shifts stay inside the uniform part of the grid so no interpolation smears the core.
    fn translate_search(&self, x: &ScalarField, ev: &Eval, dir: f64) -> Result<Option<(ScalarField, Eval)>> {
        const MARGIN: isize = 2;
        let Some((lo, hi, first, last)) = self.uniform_run(x) else {
            return Ok(None);
        };
        let s: isize = if dir > 0.0 { 1 } else { -1 };
        let room = if s > 0 {
            hi as isize - last as isize - MARGIN
        } else {
            first as isize - lo as isize - MARGIN
        };
        let mut pts: Vec<(isize, f64)> = vec![(0, ev.energy)];
        let mut best: Option<(isize, ScalarField, Eval)> = None;
        let mut n = 1;
        while n <= room {
            let cand = self.shifted(x, s * n);
            let e = self.evaluate(&cand, Some(&ev.psi_k))?;
            debug!("translate by {} cells: E {:.12e}", s * n, e.energy);
            pts.push((n, e.energy));
            let top = best.as_ref().map_or(ev.energy, |b| b.2.energy);
            if e.energy <= top {
                break;
            }
            best = Some((n, cand, e));
            n *= 2;
        }
        let Some((bn, bx, be)) = best else {
            return Ok(None);
        };
        let i = pts.iter().position(|p| p.0 == bn).unwrap_or(0);
        if i >= 1 && i + 1 < pts.len() {
            let [(x0, y0), (x1, y1), (x2, y2)] = [pts[i - 1], pts[i], pts[i + 1]].map(|(a, b)| (a as f64, b));
            let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
            let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
            let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
            let vertex = (-b / (2.0 * a)).round();
            if a < 0.0 && vertex.is_finite() && vertex as isize != bn && vertex > x0 && vertex < x2 {
                let cand = self.shifted(x, s * vertex as isize);
                let e = self.evaluate(&cand, Some(&ev.psi_k))?;
                if e.energy > be.energy {
                    return Ok(Some((cand, e)));
                }
            }
        }
        Ok(Some((bx, be)))
    }

    /// Runs the fixed-point iteration from `zeta0`.
    pub fn iterate(&self, zeta0: &ScalarField) -> Result<Solution> {
        let p = &self.params;
        let grid = self.grid();
        let nu: Vec<f64> = grid.nu().to_vec();
        let slack = |e: f64| 1e-11 * (1.0 + e.abs());
        let mut theta = p.theta;
        let mut x = self.project(zeta0);
        let mut ev = self.evaluate(&x, None)?;
        let mut trace = vec![ev.energy];
        let mut history = Anderson::new(p.anderson_depth);
        let mut converged = false;
        let mut stalled = false;
        let mut k = 0;
        let mut res;
        let mut centres: Vec<f64> = Vec::new();
        let mut left_window = false;
        loop {
            res = self.l1(&ev.next, &x);
            info!(
                "iter {k} E {:.12e} mu {:.12e} circ {:.12e} diam {:.6e} res {res:.3e} theta {theta}",
                ev.energy,
                ev.mult.mu,
                ev.mult.circulation,
                diagnostics::support_diameter(grid, &x)
            );
            if res <= p.tol_fix {
                converged = true;
                break;
            }
            if k >= p.max_iter {
                break;
            }
            k += 1;
            history.push(x.as_slice(), ev.next.as_slice());
            let mut accepted = None;
            if let Some(c) = history.extrapolate(&nu, theta) {
                let cand = self.project(&ScalarField::from_vec(grid.n_r(), grid.n_z(), c));
                let e = self.evaluate(&cand, Some(&ev.psi_k))?;
                if e.energy >= ev.energy - slack(ev.energy) {
                    accepted = Some((cand, e));
                } else {
                    history.clear();
                }
            }
            while accepted.is_none() {
                let mut mix = ev.next.clone();
                if theta < 1.0 {
                    for (m, xv) in mix.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *m = theta * *m + (1.0 - theta) * xv;
                    }
                    mix = self.project(&mix);
                }
                let e = self.evaluate(&mix, Some(&ev.psi_k))?;
                if e.energy >= ev.energy - slack(ev.energy) {
                    accepted = Some((mix, e));
                } else if theta / 2.0 >= MIN_THETA {
                    theta /= 2.0;
                    history.clear();
                } else {
                    // accept anyway so the run can finish; reported as not converged
                    warn!(
                        "energy decreased by {:.3e} even at damping {theta}",
                        ev.energy - e.energy
                    );
                    stalled = true;
                    accepted = Some((mix, e));
                }
            }
            let (nx, ne) = accepted.unwrap();
            x = nx;
            ev = ne;
            trace.push(ev.energy);
            if stalled {
                res = self.l1(&ev.next, &x);
                break;
            }
            let c = diagnostics::vorticity_center(grid, &x).map(|c| c.0).unwrap_or(f64::NAN);
            if let Some((center, limit)) = self.window {
                if (c - center).abs() > limit {
                    left_window = true;
                    res = self.l1(&ev.next, &x);
                    break;
                }
            }
            centres.push(c);
            if centres.len() > DRIFT_WINDOW {
                let n = centres.len();
                let v = (centres[n - 1] - centres[n - 1 - DRIFT_WINDOW]) / DRIFT_WINDOW as f64;
                debug!("core drift {v:.3e} per step");
                if v.is_finite() && v != 0.0 {
                    if let Some((nx, ne)) = self.translate_search(&x, &ev, v)? {
                        x = nx;
                        ev = ne;
                        trace.push(ev.energy);
                        history.clear();
                    }
                }
                centres.clear();
            }
        }
        let psi = ev.psi_free.map(|v| v - ev.mult.mu);
        let xi = psi.map(|v| v.max(0.0) / p.beta);
        let cap_active_measure = cap_activity(grid, p, &ev.mult.zeta);
        if cap_active_measure > 0.0 {
            warn!("the vorticity cap is active on a set of measure {cap_active_measure:.3e}");
        }
        Ok(Solution {
            circulation: ev.mult.circulation,
            zeta: ev.mult.zeta,
            psi,
            xi,
            psi_k: ev.psi_k,
            mu: ev.mult.mu,
            energy: ev.energy,
            iterations: k,
            converged: converged && !stalled,
            unconstrained: ev.mult.unconstrained,
            cap_active_measure,
            fix_residual: res,
            theta,
            energy_trace: trace,
            left_window,
        })
    }
}

/// Anderson extrapolation over the last few `(x, T(x))` pairs.
struct Anderson {
    depth: usize,
    xs: VecDeque<Vec<f64>>,
    gs: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            xs: VecDeque::new(),
            gs: VecDeque::new(),
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    fn push(&mut self, x: &[f64], g: &[f64]) {
        if self.depth == 0 {
            return;
        }
        self.xs.push_back(x.to_vec());
        self.gs.push_back(g.to_vec());
        while self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.gs.pop_front();
        }
    }

    /// `x + θf − (ΔX + θΔF)γ` with `γ` minimizing `‖f − ΔF γ‖` in the weighted norm.
    fn extrapolate(&self, w: &[f64], theta: f64) -> Option<Vec<f64>> {
        let n = self.xs.len();
        if n < 2 {
            return None;
        }
        let m = n - 1;
        let len = w.len();
        let f = |i: usize, k: usize| self.gs[i][k] - self.xs[i][k];
        let df: Vec<Vec<f64>> = (0..m).map(|j| (0..len).map(|k| f(j + 1, k) - f(j, k)).collect()).collect();
        let last: Vec<f64> = (0..len).map(|k| f(m, k)).collect();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for i in 0..m {
            for j in i..m {
                let v: f64 = (0..len).map(|k| w[k] * df[i][k] * df[j][k]).sum();
                a[i][j] = v;
                a[j][i] = v;
            }
            b[i] = (0..len).map(|k| w[k] * df[i][k] * last[k]).sum();
        }
        let scale = (0..m).map(|i| a[i][i]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return None;
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-10 * scale;
        }
        let gamma = solve_dense(a, b)?;
        let mut out = vec![0.0; len];
        for k in 0..len {
            let mut v = self.xs[m][k] + theta * last[k];
            for j in 0..m {
                let dx = self.xs[j + 1][k] - self.xs[j][k];
                v -= (dx + theta * df[j][k]) * gamma[j];
            }
            out[k] = v;
        }
        Some(out)
    }
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Geometry and resolution of one ring computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSetup {
    pub kind: DomainKind,
    pub d: f64,
    pub params: SolverParams,
    pub grid: GridSpec,
    pub margins: Margins,
    /// Half-height of the support box for the pipe and the whole space.
    pub support_z: Option<f64>,
    /// Centre of the initial disc; defaults to the predicted radius.
    pub initial_radius: Option<f64>,
    /// Grid rebuilds allowed when the core settles away from the refinement band.
    pub max_recenter: usize,
}

impl RingSetup {
    pub fn new(kind: DomainKind, d: f64, params: SolverParams) -> Self {
        RingSetup {
            kind,
            d,
            params,
            grid: GridSpec::default(),
            margins: Margins::default(),
            support_z: None,
            initial_radius: None,
            max_recenter: 4,
        }
    }

    /// Predicted concentration radius for this geometry.
    pub fn r_star(&self) -> Result<f64> {
        asymptotics::predict(self.kind, self.d, self.params.w).map(|p| p.r_star)
    }

    pub fn support_box(&self) -> Result<SupportBox> {
        Ok(SupportBox::for_domain(self.kind, self.d, self.params.w, self.r_star()?, self.support_z))
    }

    /// Refined grid centred on `r_center`.
    pub fn build_grid(&self, r_center: f64) -> Result<Grid> {
        let support = self.support_box()?;
        let domain = make_domain(self.kind, self.d, support.rect(), self.margins)?;
        make_refined_grid(&domain, &self.grid.band(self.params.beta, r_center))
    }
}

/// A finished computation together with its grid.
#[derive(Debug, Clone)]
pub struct RingRun {
    pub setup: RingSetup,
    pub grid: Grid,
    pub support: SupportBox,
    pub r_star: f64,
    pub solution: Solution,
    /// Number of grid rebuilds around the computed core.
    pub recentered: usize,
    pub warnings: Vec<String>,
}

/// Solves on a grid refined around the predicted radius, rebuilding the grid
/// around the computed core when it settles away from the band centre.
pub fn solve_ring(setup: &RingSetup) -> Result<RingRun> {
    let params = setup.params;
    params.validate()?;
    let mut warnings = params.regime_warnings(setup.kind, setup.d);
    let r_star = setup.r_star()?;
    let support = setup.support_box()?;
    let mut center = setup.initial_radius.unwrap_or(r_star);
    if setup.kind == DomainKind::ExteriorBall && setup.initial_radius.is_none() {
        // r* = d in the boundary regime; start a few core widths off the surface
        center = center.max(setup.d + 4.0 * params.beta);
    }
    if !(center > 0.0 && center < support.r_max) {
        center = center.clamp(0.05 * support.r_max, 0.95 * support.r_max);
    }
    let band = setup.grid.band(params.beta, center);
    let mut grid = setup.build_grid(center)?;
    let limit = 0.25 * band.r_half_width;
    let build = |grid: &Grid, center: f64, recentered: usize| -> Result<Problem> {
        let p = Problem::new(params, grid, support)?;
        Ok(if recentered < setup.max_recenter {
            p.with_drift_window(center, limit)
        } else {
            p
        })
    };
    let mut problem = build(&grid, center, 0)?;
    let mut zeta0 = initial_guess(&grid, &params, &support, center)?;
    let mut recentered = 0;
    loop {
        let solution = problem.iterate(&zeta0)?;
        let x = diagnostics::vorticity_center(&grid, &solution.zeta).map(|c| c.0).unwrap_or(center);
        let drift = (x - center).abs();
        if drift > limit && recentered < setup.max_recenter {
            info!("core at r = {x:.6} drifted {drift:.3e} from the band centre; rebuilding the grid");
            let new_grid = setup.build_grid(x)?;
            zeta0 = new_grid.resample(&grid, &solution.zeta);
            grid = new_grid;
            center = x;
            recentered += 1;
            problem = build(&grid, center, recentered)?;
            continue;
        }
        if let Some(w) = grid.resolution_warning(params.beta, x) {
            warnings.push(w);
        }
        if !solution.converged {
            warnings.push(format!(
                "fixed point not converged after {} iterations (residual {:.3e})",
                solution.iterations, solution.fix_residual
            ));
        }
        if solution.cap_active_measure > 0.0 {
            warnings.push(format!("vorticity cap active on measure {:.3e}", solution.cap_active_measure));
        }
        for w in &warnings {
            warn!("{w}");
        }
        return Ok(RingRun {
            setup: setup.clone(),
            grid,
            support,
            r_star,
            solution,
            recentered,
            warnings,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, DomainSpec};

    fn whole_grid(n: usize, rm: f64, zm: f64) -> Grid {
        let dom = DomainSpec {
            kind: DomainKind::WholeSpace,
            d: 0.0,
            truncation: Rect { r_max: rm, z_max: zm },
        };
        make_grid(&dom, n, n | 1).unwrap()
    }

    fn params() -> SolverParams {
        SolverParams::new((-1.0f64).exp(), 1.0)
    }

    #[test]
    fn background_examples() {
        let g = whole_grid(21, 2.0, 1.0);
        let bg = background_stream(&g, &params());
        for j in 0..g.n_z() {
            assert_eq!(bg[(0, j)], 0.0);
        }
        let i = g.r().iter().position(|&r| r == 1.0).unwrap();
        assert!((bg[(i, 3)] + 0.5).abs() < 1e-15);
        // cancels on the sphere
        let dom = DomainSpec {
            kind: DomainKind::ExteriorBall,
            d: 1.0,
            truncation: Rect { r_max: 3.0, z_max: 3.0 },
        };
        let gb = Grid::from_coordinates(dom, vec![0.0, 0.6, 1.0, 2.0], vec![-0.8, 0.0, 0.8]).unwrap();
        let bg = background_stream(&gb, &params());
        assert!(bg[(1, 2)].abs() < 1e-15 && bg[(1, 0)].abs() < 1e-15);
        assert!(bg[(2, 1)].abs() < 1e-15);
    }

    #[test]
    fn bathtub_cases() {
        let g = whole_grid(21, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.9, z_max: 0.9 };
        let mut p = params();
        p.beta = 0.1;
        let neg = g.field_from_fn(|r, _| -r - 0.1);
        assert_eq!(bathtub_update(&g, &neg, &p, &sb).max(), 0.0);
        let psi = g.field_from_fn(|r, _| 0.5 * r * r);
        let z = bathtub_update(&g, &psi, &p, &sb);
        for k in 0..g.len() {
            let (r, zc) = g.coords(k);
            if sb.contains(r, zc) {
                assert!((z[k] * r * r * p.beta * p.beta - psi[k]).abs() < 1e-12);
            } else {
                assert_eq!(z[k], 0.0);
            }
        }
        let at_cap = g.field_from_fn(|r, _| p.cap() * r * r);
        let z = bathtub_update(&g, &at_cap, &p, &sb);
        let (r, zc) = g.coords(g.idx(5, 10));
        assert!(sb.contains(r, zc));
        assert_eq!(z[g.idx(5, 10)], p.zeta_max());
    }

    #[test]
    fn multiplier_unconstrained_and_linear_root() {
        let g = whole_grid(41, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.9, z_max: 0.9 };
        let mut p = params();
        p.beta = 0.5;
        // ψ_free = c r² on a patch: κ(μ) is linear in μ while the patch stays inside the positivity set
        let patch = |r: f64, z: f64| (r - 1.0).abs() < 0.21 && z.abs() < 0.21;
        let half_mass = g.field_from_fn(|r, z| if patch(r, z) { 1.0 } else { 0.0 });
        let area_r: f64 = (0..g.len())
            .filter(|&k| half_mass[k] > 0.0)
            .map(|k| g.nu()[k] / g.coords(k).0.powi(2))
            .sum();
        // κ(μ) = Σ ν (c r² − μ)/(r²β²) = (c M − μ A)/β² with M = Σ ν, A = Σ ν / r²
        let m_nu: f64 = (0..g.len()).map(|k| half_mass[k] * g.nu()[k]).sum();
        let c = 2.0 * p.beta * p.beta / m_nu;
        let psi_free = g.field_from_fn(|r, z| if patch(r, z) { c * r * r } else { -1.0 });
        let m = solve_multiplier(&g, &psi_free, &p, &sb);
        let expect = (c * m_nu - p.beta * p.beta) / area_r;
        assert!(!m.unconstrained);
        assert!((m.circulation - 1.0).abs() <= p.tol_circ);
        assert!((m.mu - expect).abs() <= 2.0 * p.tol_circ * p.beta * p.beta / area_r, "{} vs {expect}", m.mu);
        // κ(0) = 1/2
        let small = psi_free.map(|v| if v > 0.0 { 0.25 * v } else { v });
        let k0 = circulation_given_mu(&g, &small, 0.0, &p, &sb);
        assert!((k0 - 0.5).abs() < 1e-12, "{k0}");
        let m = solve_multiplier(&g, &small, &p, &sb);
        assert!(m.unconstrained && m.mu == 0.0);
    }

    #[test]
    fn multiplier_with_swirl_hits_unit_circulation() {
        let g = whole_grid(81, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.9, z_max: 0.9 };
        let mut p = params();
        p.beta = 0.2;
        p.alpha = 3.0;
        let psi_free = g.field_from_fn(|r, z| 0.05 - (r - 1.0).powi(2) - z * z);
        let m = solve_multiplier(&g, &psi_free, &p, &sb);
        assert!((m.circulation - 1.0).abs() <= p.tol_circ, "{}", m.circulation);
        assert!((g.integrate_nu(&m.zeta) - 1.0).abs() <= p.tol_circ);
        let m2 = circulation_given_mu(&g, &psi_free, m.mu * 1.01, &p, &sb);
        assert!(m2 <= m.circulation);
    }

    #[test]
    fn steiner_examples() {
        let g = whole_grid(21, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.95, z_max: 0.99 };
        // already symmetric decreasing
        let bump = g.field_from_fn(|r, z| if r > 0.0 && r < 1.9 && z.abs() < 0.99 { (-z * z).exp() * r } else { 0.0 });
        let s = steiner_symmetrize(&g, &sb, &bump);
        for k in 0..g.len() {
            assert!((s[k] - bump[k]).abs() < 1e-15);
        }
        // indicator of [0.3, 0.7] moves to |z| <= 0.2
        let ind = g.field_from_fn(|r, z| if r > 0.5 && r < 1.5 && z > 0.29 && z < 0.71 { 1.0 } else { 0.0 });
        let s = steiner_symmetrize(&g, &sb, &ind);
        let expect = g.field_from_fn(|r, z| if r > 0.5 && r < 1.5 && z.abs() < 0.21 { 1.0 } else { 0.0 });
        for k in 0..g.len() {
            assert!((s[k] - expect[k]).abs() < 1e-12, "{:?}", g.coords(k));
        }
        assert!((g.integrate_nu(&s) - g.integrate_nu(&ind)).abs() < 1e-14);
    }

    #[test]
    fn initial_guess_normalized_and_resolved() {
        let g = whole_grid(201, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.9, z_max: 0.9 };
        let mut p = params();
        p.beta = 0.05;
        let z = initial_guess(&g, &p, &sb, 1.0).unwrap();
        assert!((g.integrate_nu(&z) - 1.0).abs() < 1e-14);
        p.beta = 0.005;
        assert!(matches!(initial_guess(&g, &p, &sb, 1.0), Err(Error::Unresolved(_))));
    }

    #[test]
    fn cap_activity_measures_capped_cells() {
        let g = whole_grid(21, 2.0, 1.0);
        let p = params();
        let mut z = ScalarField::zeros_like(&g);
        assert_eq!(cap_activity(&g, &p, &z), 0.0);
        let k = g.idx(4, 7);
        z[k] = p.zeta_max();
        assert_eq!(cap_activity(&g, &p, &z), g.nu()[k]);
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        p.beta = 1.5;
        let e = p.validate().unwrap_err();
        assert!(e.to_string().contains("β must lie in (0,1)"));
        let mut p = params();
        p.cap = Some(0.5);
        assert!(p.validate().is_err());
        assert_eq!(default_cap(2.0, 0.1), 10.0);
        assert_eq!(default_cap(200.0, 0.1), 200.0);
    }
}
