//! Quantities read off a computed ring: support geometry, centre of vorticity,
//! rescaled core profile, velocity and swirl, weak-form residuals, the Beltrami
//! identity and helicity. Every function is pure in its field inputs.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::variational::RingRun;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportStats {
    /// Smallest `r` of the support on the symmetry line `z = 0`.
    pub inner: f64,
    /// Largest `r` of the support on the symmetry line.
    pub outer: f64,
    pub diam: f64,
    /// Largest distance from a support point to the circle of radius `r*` in `z = 0`.
    pub dist_ring: f64,
    pub centroid: (f64, f64),
}

fn support_points(grid: &Grid, zeta: &ScalarField) -> Vec<(f64, f64)> {
    (0..grid.len()).filter(|&k| zeta[k] > 0.0).map(|k| grid.coords(k)).collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Euclidean diameter of the node set where `f > 0`; zero when it is empty.
pub fn support_diameter(grid: &Grid, f: &ScalarField) -> f64 {
    let h = hull(support_points(grid, f));
    let mut best: f64 = 0.0;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            best = best.max(((h[i].0 - h[j].0).powi(2) + (h[i].1 - h[j].1).powi(2)).sqrt());
        }
    }
    best
}

/// Centre of vorticity `∫ x ζ dm₂ / ∫ ζ dm₂`.
pub fn vorticity_center(grid: &Grid, zeta: &ScalarField) -> Result<(f64, f64)> {
    let (mut m, mut mr, mut mz) = (0.0, 0.0, 0.0);
    for k in 0..grid.len() {
        if zeta[k] != 0.0 {
            let w = zeta[k] * grid.area(k);
            let (r, z) = grid.coords(k);
            m += w;
            mr += w * r;
            mz += w * z;
        }
    }
    if !(m > 0.0) {
        return Err(Error::EmptySupport);
    }
    Ok((mr / m, mz / m))
}

pub fn support_stats(grid: &Grid, zeta: &ScalarField, r_star: f64) -> Result<SupportStats> {
    let pts = support_points(grid, zeta);
    if pts.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mid = grid.z_mid();
    let on_axis: Vec<f64> = (0..grid.n_r())
        .filter(|&i| zeta[grid.idx(i, mid)] > 0.0)
        .map(|i| grid.r()[i])
        .collect();
    let rs: &[f64] = if on_axis.is_empty() { &[] } else { &on_axis };
    let (inner, outer) = if rs.is_empty() {
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)))
    } else {
        (rs[0], rs[rs.len() - 1])
    };
    let dist_ring = pts
        .iter()
        .map(|p| ((p.0 - r_star).powi(2) + p.1 * p.1).sqrt())
        .fold(0.0, f64::max);
    Ok(SupportStats {
        inner,
        outer,
        diam: support_diameter(grid, zeta),
        dist_ring,
        centroid: vorticity_center(grid, zeta)?,
    })
}

/// `g(x) = β² ζ(X + β x)` sampled on a square window, with a radial monotonicity score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledProfile {
    pub center: (f64, f64),
    pub beta: f64,
    /// Window half-width in rescaled units.
    pub radius: f64,
    pub n: usize,
    /// Row-major samples over `[−radius, radius]²`, first index along `r`.
    pub values: Vec<f64>,
    /// `∫ g dx` over the window.
    pub mass: f64,
    /// `∫ ζ dm₂`, which `mass` approximates.
    pub mass_m2: f64,
    /// Angular averages of `g` on equally spaced radii `0..radius`.
    pub radial: Vec<f64>,
    pub score: f64,
}

pub const PROFILE_SAMPLES: usize = 81;
const PROFILE_RADII: usize = 41;
const PROFILE_ANGLES: usize = 64;

/// Rescaled core profile around `center`. The window half-width defaults to 1.25
/// times the support radius in units of `β`; an explicit window that does not
/// contain the support is an error.
pub fn rescaled_profile(
    grid: &Grid,
    zeta: &ScalarField,
    center: (f64, f64),
    beta: f64,
    radius: Option<f64>,
) -> Result<RescaledProfile> {
    let pts = support_points(grid, zeta);
    if pts.is_empty() {
        return Err(Error::EmptySupport);
    }
    let reach = pts
        .iter()
        .map(|p| ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt())
        .fold(0.0, f64::max)
        / beta;
    let radius = match radius {
        Some(r) if reach > r => {
            return Err(Error::WindowEscape(format!(
                "support reaches {reach:.3} core scales from the centre, window is {r:.3}"
            )))
        }
        Some(r) => r,
        None => 1.25 * reach.max(1.0),
    };
    let g = |x: f64, y: f64| beta * beta * grid.interpolate(zeta, center.0 + beta * x, center.1 + beta * y);
    let n = PROFILE_SAMPLES;
    let step = 2.0 * radius / (n - 1) as f64;
    let mut values = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            values.push(g(-radius + a as f64 * step, -radius + b as f64 * step));
        }
    }
    let mass = values.iter().sum::<f64>() * step * step;
    let mass_m2 = grid.integrate_m2(zeta);
    let radial: Vec<f64> = (0..PROFILE_RADII)
        .map(|i| {
            let rho = radius * i as f64 / (PROFILE_RADII - 1) as f64;
            (0..PROFILE_ANGLES)
                .map(|t| {
                    let th = 2.0 * PI * t as f64 / PROFILE_ANGLES as f64;
                    g(rho * th.cos(), rho * th.sin())
                })
                .sum::<f64>()
                / PROFILE_ANGLES as f64
        })
        .collect();
    Ok(RescaledProfile {
        center,
        beta,
        radius,
        n,
        values: values.clone(),
        mass,
        mass_m2,
        score: monotonicity_score(&radial, 1e-3 * values.iter().cloned().fold(0.0, f64::max)),
        radial,
    })
}

/// Fraction of radius pairs `ρ₁ < ρ₂` with `g(ρ₁) ≥ g(ρ₂) − eps`.
pub fn monotonicity_score(radial: &[f64], eps: f64) -> f64 {
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..radial.len() {
        for j in i + 1..radial.len() {
            total += 1;
            if radial[i] >= radial[j] - eps {
                good += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub v_r: ScalarField,
    pub v_theta: ScalarField,
    pub v_z: ScalarField,
    pub xi: ScalarField,
}

// second-order three-point derivative weights on a nonuniform line, one-sided at the ends
fn derivative_weights(x: &[f64], i: usize) -> [(usize, f64); 3] {
    let n = x.len();
    if i == 0 {
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        return [
            (0, -(2.0 * h1 + h2) / (h1 * (h1 + h2))),
            (1, (h1 + h2) / (h1 * h2)),
            (2, -h1 / (h2 * (h1 + h2))),
        ];
    }
    if i == n - 1 {
        let (h1, h2) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
        return [
            (n - 1, (2.0 * h1 + h2) / (h1 * (h1 + h2))),
            (n - 2, -(h1 + h2) / (h1 * h2)),
            (n - 3, h1 / (h2 * (h1 + h2))),
        ];
    }
    let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    [
        (i - 1, -hp / (hm * (hm + hp))),
        (i, (hp - hm) / (hm * hp)),
        (i + 1, hm / (hp * (hm + hp))),
    ]
}

/// `∂f/∂r` at every node.
pub fn d_dr(grid: &Grid, f: &ScalarField) -> ScalarField {
    let nz = grid.n_z();
    let mut out = ScalarField::zeros_like(grid);
    for i in 0..grid.n_r() {
        let w = derivative_weights(grid.r(), i);
        for j in 0..nz {
            out[(i, j)] = w.iter().map(|&(a, c)| c * f[(a, j)]).sum();
        }
    }
    out
}

/// `∂f/∂z` at every node.
pub fn d_dz(grid: &Grid, f: &ScalarField) -> ScalarField {
    let nz = grid.n_z();
    let mut out = ScalarField::zeros_like(grid);
    for j in 0..nz {
        let w = derivative_weights(grid.z(), j);
        for i in 0..grid.n_r() {
            out[(i, j)] = w.iter().map(|&(b, c)| c * f[(i, b)]).sum();
        }
    }
    out
}

/// Velocity `v_r = −ψ_z / r`, `v_z = ψ_r / r`, swirl `ξ = ψ₊/β` and `v_θ = ξ / r`.
/// On the axis `v_r = v_θ = 0` and `v_z` is extrapolated evenly in `r`.
pub fn velocity_swirl(grid: &Grid, psi: &ScalarField, beta: f64) -> VelocityField {
    let pr = d_dr(grid, psi);
    let pz = d_dz(grid, psi);
    let xi = psi.map(|v| v.max(0.0) / beta);
    let mut v_r = ScalarField::zeros_like(grid);
    let mut v_z = ScalarField::zeros_like(grid);
    let mut v_theta = ScalarField::zeros_like(grid);
    let r = grid.r();
    for i in 1..grid.n_r() {
        for j in 0..grid.n_z() {
            v_r[(i, j)] = -pz[(i, j)] / r[i];
            v_z[(i, j)] = pr[(i, j)] / r[i];
            v_theta[(i, j)] = xi[(i, j)] / r[i];
        }
    }
    let (r1, r2) = (r[1] * r[1], r[2] * r[2]);
    for j in 0..grid.n_z() {
        v_z[(0, j)] = (r2 * v_z[(1, j)] - r1 * v_z[(2, j)]) / (r2 - r1);
    }
    VelocityField { v_r, v_theta, v_z, xi }
}

/// Smooth tensor-product bump `b((r − r_c)/w_r) b((z − z_c)/w_z)`, `b(t) = exp(1 − 1/(1 − t²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub rc: f64,
    pub zc: f64,
    pub wr: f64,
    pub wz: f64,
}

fn bump1(t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let s = 1.0 - t * t;
    let v = (1.0 - 1.0 / s).exp();
    (v, v * (-2.0 * t / (s * s)))
}

impl Bump {
    /// Value and gradient `(φ, φ_r, φ_z)`.
    pub fn eval(&self, r: f64, z: f64) -> (f64, f64, f64) {
        let (a, da) = bump1((r - self.rc) / self.wr);
        let (b, db) = bump1((z - self.zc) / self.wz);
        (a * b, da / self.wr * b, a * db / self.wz)
    }
}

/// Random bumps centred in `[r0, r1] × [z0, z1]` with half-widths in `[w0, w1]`,
/// kept clear of the axis.
pub fn random_bumps(n: usize, seed: u64, region: [f64; 4], widths: (f64, f64)) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rc = rng.gen_range(region[0]..region[1]);
        let zc = rng.gen_range(region[2]..region[3]);
        let wr = rng.gen_range(widths.0..widths.1);
        let wz = rng.gen_range(widths.0..widths.1);
        if rc - wr > 0.0 {
            out.push(Bump { rc, zc, wr, wz });
        }
    }
    out
}

/// `(max_φ |∫ ∂(ψ, ξ) φ dr dz|, max_φ |∫ [ζ ∂(ψ, φ) − ∂(ξ², φ)/(2r²)] dr dz|)` over the
/// given test functions, with `∂(f, g) = f_r g_z − f_z g_r` by finite differences.
pub fn weak_residuals(
    grid: &Grid,
    psi: &ScalarField,
    xi: &ScalarField,
    zeta: &ScalarField,
    tests: &[Bump],
) -> (f64, f64) {
    let pr = d_dr(grid, psi);
    let pz = d_dz(grid, psi);
    let xr = d_dr(grid, xi);
    let xz = d_dz(grid, xi);
    let (mut res1, mut res2) = (0.0f64, 0.0f64);
    for b in tests {
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..grid.len() {
            let (r, z) = grid.coords(k);
            let (phi, fr, fz) = b.eval(r, z);
            if phi == 0.0 && fr == 0.0 && fz == 0.0 {
                continue;
            }
            let a = grid.area(k);
            s1 += (pr[k] * xz[k] - pz[k] * xr[k]) * phi * a;
            let j_psi = pr[k] * fz - pz[k] * fr;
            // ∂(ξ², φ) = 2ξ ∂(ξ, φ)
            let j_xi2 = 2.0 * xi[k] * (xr[k] * fz - xz[k] * fr);
            s2 += (zeta[k] * j_psi - j_xi2 / (2.0 * r * r)) * a;
        }
        res1 = res1.max(s1.abs());
        res2 = res2.max(s2.abs());
    }
    (res1, res2)
}

/// `max |ζ r² β² − ψ₊| / max ψ₊` over the support; `None` when `α ≠ 0`.
pub fn beltrami_deviation(grid: &Grid, psi: &ScalarField, zeta: &ScalarField, beta: f64, alpha: f64) -> Option<f64> {
    if alpha != 0.0 {
        return None;
    }
    let top = psi.as_slice().iter().fold(0.0f64, |a, &v| a.max(v));
    if !(top > 0.0) {
        return Some(0.0);
    }
    let mut dev: f64 = 0.0;
    for k in 0..grid.len() {
        if zeta[k] > 0.0 {
            let r = grid.coords(k).0;
            dev = dev.max((zeta[k] * r * r * beta * beta - psi[k].max(0.0)).abs());
        }
    }
    Some(dev / top)
}

/// `2π ∫ v·ω r dr dz` with `ω_r = −∂_z v_θ`, `ω_θ = ∂_z v_r − ∂_r v_z`, `ω_z = ∂_r(r v_θ)/r`.
pub fn helicity(grid: &Grid, v: &VelocityField) -> f64 {
    let w_r = d_dz(grid, &v.v_theta).map(|x| -x);
    let vzr = d_dr(grid, &v.v_z);
    let vrz = d_dz(grid, &v.v_r);
    let mut rvt = v.v_theta.clone();
    for k in 0..grid.len() {
        rvt[k] *= grid.coords(k).0;
    }
    let d_rvt = d_dr(grid, &rvt);
    let mut h = 0.0;
    for k in 0..grid.len() {
        let r = grid.coords(k).0;
        if r == 0.0 {
            continue;
        }
        let w_theta = vrz[k] - vzr[k];
        let w_z = d_rvt[k] / r;
        h += (v.v_r[k] * w_r[k] + v.v_theta[k] * w_theta + v.v_z[k] * w_z) * r * grid.area(k);
    }
    2.0 * PI * h
}

/// Largest relative deviation of `v_z` from `−W log(1/β)` along a grid row `j`,
/// over nodes with `r` in `(0, r_max)`.
pub fn far_field_deviation(grid: &Grid, v: &VelocityField, j: usize, w: f64, beta: f64) -> f64 {
    let target = -w * (1.0 / beta).ln();
    (1..grid.n_r() - 1)
        .map(|i| ((v.v_z[(i, j)] - target) / target).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Value {
    Num(f64),
    Int(i64),
    Text(String),
    NotApplicable,
}

impl Value {
    /// `precision` digits after the point in scientific notation.
    pub fn render(&self, precision: usize) -> String {
        match self {
            Value::Num(v) => format!("{v:.precision$e}"),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
            Value::NotApplicable => "n/a".into(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(16))
    }
}

pub const RECORD_KEYS: &[&str] = &[
    "beta",
    "W",
    "alpha",
    "domain",
    "mu",
    "E",
    "circ",
    "A",
    "B",
    "diam",
    "dist_ring",
    "X_r",
    "X_z",
    "xi_max_times_beta",
    "mono_score",
    "res1",
    "res2",
    "beltrami",
    "helicity",
    "iterations",
    "converged",
    "cap_active",
    "fix_residual",
];

/// Per-run summary, emitted as `key = value` lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub beta: f64,
    pub w: f64,
    pub alpha: f64,
    pub domain: String,
    pub mu: f64,
    pub energy: f64,
    pub circ: f64,
    pub support: SupportStats,
    pub xi_max_times_beta: f64,
    pub mono_score: f64,
    pub res1: f64,
    pub res2: f64,
    pub beltrami: Option<f64>,
    pub helicity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cap_active: f64,
    pub fix_residual: f64,
}

impl DiagnosticsRecord {
    pub fn entries(&self) -> Vec<(&'static str, Value)> {
        use Value::*;
        let s = &self.support;
        vec![
            ("beta", Num(self.beta)),
            ("W", Num(self.w)),
            ("alpha", Num(self.alpha)),
            ("domain", Text(self.domain.clone())),
            ("mu", Num(self.mu)),
            ("E", Num(self.energy)),
            ("circ", Num(self.circ)),
            ("A", Num(s.inner)),
            ("B", Num(s.outer)),
            ("diam", Num(s.diam)),
            ("dist_ring", Num(s.dist_ring)),
            ("X_r", Num(s.centroid.0)),
            ("X_z", Num(s.centroid.1)),
            ("xi_max_times_beta", Num(self.xi_max_times_beta)),
            ("mono_score", Num(self.mono_score)),
            ("res1", Num(self.res1)),
            ("res2", Num(self.res2)),
            ("beltrami", self.beltrami.map_or(NotApplicable, Num)),
            ("helicity", Num(self.helicity)),
            ("iterations", Int(self.iterations as i64)),
            ("converged", Text(self.converged.to_string())),
            ("cap_active", Num(self.cap_active)),
            ("fix_residual", Num(self.fix_residual)),
        ]
    }

    pub fn write<W: Write>(&self, mut w: W, precision: usize) -> std::io::Result<()> {
        for (k, v) in self.entries() {
            writeln!(w, "{k} = {}", v.render(precision))?;
        }
        Ok(())
    }

    pub fn to_text(&self, precision: usize) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, precision).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Number of random test functions in the weak residuals of a record.
pub const RECORD_TESTS: usize = 20;

/// Test bumps around the computed core: centres within two support radii of the
/// centroid, half-widths between one and three support radii.
pub fn core_bumps(stats: &SupportStats, n: usize, seed: u64) -> Vec<Bump> {
    let rad = (0.5 * stats.diam).max(1e-12);
    let (xr, xz) = stats.centroid;
    random_bumps(n, seed, [xr - 2.0 * rad, xr + 2.0 * rad, xz - 2.0 * rad, xz + 2.0 * rad], (rad, 3.0 * rad))
}

/// Default seed for the placement of residual test functions.
pub const DEFAULT_SEED: u64 = 0x5eed;

/// All diagnostics of a finished run; `seed` places the residual test functions.
pub fn record(run: &RingRun, seed: u64) -> Result<DiagnosticsRecord> {
    let grid = &run.grid;
    let sol = &run.solution;
    let p = &run.setup.params;
    let stats = support_stats(grid, &sol.zeta, run.r_star)?;
    let profile = rescaled_profile(grid, &sol.zeta, stats.centroid, p.beta, None)?;
    let vel = velocity_swirl(grid, &sol.psi, p.beta);
    let bumps = core_bumps(&stats, RECORD_TESTS, seed);
    let (res1, res2) = weak_residuals(grid, &sol.psi, &vel.xi, &sol.zeta, &bumps);
    Ok(DiagnosticsRecord {
        beta: p.beta,
        w: p.w,
        alpha: p.alpha,
        domain: run.setup.kind.to_string(),
        mu: sol.mu,
        energy: sol.energy,
        circ: sol.circulation,
        support: stats,
        xi_max_times_beta: sol.psi.as_slice().iter().fold(0.0f64, |a, &v| a.max(v)),
        mono_score: profile.score,
        res1,
        res2,
        beltrami: beltrami_deviation(grid, &sol.psi, &sol.zeta, p.beta, p.alpha),
        helicity: helicity(grid, &vel),
        iterations: sol.iterations,
        converged: sol.converged,
        cap_active: sol.cap_active_measure,
        fix_residual: sol.fix_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, DomainKind, DomainSpec, Rect};

    fn grid(n: usize) -> Grid {
        let dom = DomainSpec {
            kind: DomainKind::WholeSpace,
            d: 0.0,
            truncation: Rect { r_max: 2.0, z_max: 1.0 },
        };
        make_grid(&dom, n, n | 1).unwrap()
    }

    #[test]
    fn single_node_support() {
        let g = grid(21);
        let mut z = ScalarField::zeros_like(&g);
        let i = g.r().iter().position(|&r| (r - 1.0).abs() < 1e-12).unwrap();
        let j = g.z().iter().position(|&v| (v - 0.5).abs() < 1e-12).unwrap();
        z[(i, j)] = 3.0;
        let s = support_stats(&g, &z, 1.0).unwrap();
        assert!((s.dist_ring - 0.5).abs() < 1e-12);
        assert_eq!(s.diam, 0.0);
        let c = vorticity_center(&g, &z).unwrap();
        assert!((c.0 - 1.0).abs() < 1e-12 && (c.1 - 0.5).abs() < 1e-12);
        let jm = g.z_mid();
        let mut two = ScalarField::zeros_like(&g);
        two[(i, jm + 3)] = 1.0;
        two[(i, jm - 3)] = 1.0;
        let c = vorticity_center(&g, &two).unwrap();
        assert!((c.0 - 1.0).abs() < 1e-12 && c.1 == 0.0);
        assert!(support_stats(&g, &ScalarField::zeros_like(&g), 1.0).is_err());
    }

    #[test]
    fn profile_scores() {
        let g = grid(201);
        let beta = 0.05;
        let bump = g.field_from_fn(|r, z| ((1.0 - ((r - 1.0).powi(2) + z * z) / (0.1 * 0.1)).max(0.0)) / (beta * beta));
        let p = rescaled_profile(&g, &bump, (1.0, 0.0), beta, None).unwrap();
        assert_eq!(p.score, 1.0);
        assert!((p.mass - p.mass_m2).abs() < 2e-2 * p.mass_m2);
        let ring = g.field_from_fn(|r, z| {
            let rho = ((r - 1.0).powi(2) + z * z).sqrt();
            if rho > 0.05 && rho < 0.1 {
                1.0
            } else {
                0.0
            }
        });
        let p = rescaled_profile(&g, &ring, (1.0, 0.0), beta, None).unwrap();
        assert!(p.score < 1.0);
        assert!(matches!(
            rescaled_profile(&g, &ring, (1.0, 0.0), beta, Some(1.0)),
            Err(Error::WindowEscape(_))
        ));
    }

    #[test]
    fn background_velocity_is_uniform() {
        let g = grid(41);
        let (w, beta) = (0.7, 1e-2);
        let l = (1.0f64 / beta).ln();
        let psi = g.field_from_fn(|r, _| -0.5 * w * r * r * l);
        let v = velocity_swirl(&g, &psi, beta);
        for k in 0..g.len() {
            assert!((v.v_z[k] + w * l).abs() < 1e-12 * w * l);
            assert!(v.v_r[k].abs() < 1e-12);
            assert_eq!(v.v_theta[k], 0.0);
        }
        assert_eq!(helicity(&g, &v), 0.0);
    }

    #[test]
    fn residuals_vanish_for_dependent_pair() {
        let g = grid(81);
        let psi = g.field_from_fn(|r, z| r * r * (1.0 - z * z) - 0.3);
        let xi = psi.map(|v| 2.5 * v);
        let bumps = random_bumps(5, 1, [0.5, 1.5, -0.5, 0.5], (0.1, 0.3));
        let (r1, _) = weak_residuals(&g, &psi, &xi, &ScalarField::zeros_like(&g), &bumps);
        assert!(r1 < 1e-12);
        let zero = ScalarField::zeros_like(&g);
        assert_eq!(weak_residuals(&g, &zero, &zero, &zero, &bumps), (0.0, 0.0));
    }

    #[test]
    fn beltrami_cases() {
        let g = grid(41);
        let beta = 0.1;
        let psi = g.field_from_fn(|r, z| 0.2 - (r - 1.0).powi(2) - z * z);
        let zeta = g.field_from_fn(|r, z| {
            let p = 0.2 - (r - 1.0).powi(2) - z * z;
            if p > 0.0 && r > 0.0 {
                p / (r * r * beta * beta)
            } else {
                0.0
            }
        });
        assert!(beltrami_deviation(&g, &psi, &zeta, beta, 0.0).unwrap() < 1e-15);
        assert!(beltrami_deviation(&g, &psi, &zeta, beta, 1.0).is_none());
    }

    #[test]
    fn mirror_flips_helicity() {
        let g = grid(61);
        let psi = g.field_from_fn(|r, z| (0.1 - (r - 1.0).powi(2) - (z - 0.2).powi(2)) * r * r);
        let v = velocity_swirl(&g, &psi, 0.1);
        // reflection through z = 0: (v_r, v_θ, v_z)(r, z) ↦ (v_r, v_θ, −v_z)(r, −z)
        let flip = |f: &ScalarField, sign: f64| {
            let mut out = f.clone();
            for k in 0..g.len() {
                out[k] = sign * f[g.mirror_idx(k)];
            }
            out
        };
        let m = VelocityField {
            v_r: flip(&v.v_r, 1.0),
            v_theta: flip(&v.v_theta, 1.0),
            v_z: flip(&v.v_z, -1.0),
            xi: flip(&v.xi, 1.0),
        };
        let a = helicity(&g, &v);
        let b = helicity(&g, &m);
        assert!(a.abs() > 1e-6);
        assert!((a + b).abs() < 1e-9 * a.abs(), "{a} {b}");
    }

    #[test]
    fn monotonicity_of_sequences() {
        assert_eq!(monotonicity_score(&[3.0, 2.0, 1.0, 0.0], 0.0), 1.0);
        assert!(monotonicity_score(&[0.0, 1.0, 0.0], 0.0) < 1.0);
    }
}
