//! The `validate` property suite: fast structural checks of every module, sized to
//! finish in seconds with an optimized build.

use std::f64::consts::PI;
use std::fmt;

use crate::asymptotics::{self, gamma1, gamma2, predict};
use crate::elliptic::assemble;
use crate::error::Result;
use crate::geometry::{make_grid, DomainKind, DomainSpec, Grid, NodeKind, Rect};
use crate::kernel::{self, KernelBackend, QuadControl};
use crate::variational::{solve_ring, RingSetup, SolverParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

type CheckFn = fn() -> Result<Check>;

/// Runs every check; a check that errors counts as failed.
pub fn run_validation() -> Vec<Check> {
    let suite: [(&str, CheckFn); 6] = [
        ("operator", operator_checks),
        ("inverse", inverse_checks),
        ("kernel", kernel_checks),
        ("predictions", prediction_checks),
        ("solver_contract", solver_checks),
        ("config", config_checks),
    ];
    suite
        .iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, format!("error: {e}"))))
        .collect()
}

fn whole(n_r: usize, n_z: usize, rm: f64, zm: f64) -> Result<Grid> {
    let dom = DomainSpec {
        kind: DomainKind::WholeSpace,
        d: 0.0,
        truncation: Rect { r_max: rm, z_max: zm },
    };
    make_grid(&dom, n_r, n_z)
}

/// Smoothly stretched grid on `[0.1, 2] × [−1, 1]` plus the axis node.
fn stretched(n: usize) -> Result<Grid> {
    let r: Vec<f64> = std::iter::once(0.0)
        .chain((0..=n).map(|i| {
            let s = i as f64 / n as f64;
            0.1 + 1.9 * (s + 0.3 * (PI * s).sin() / PI)
        }))
        .collect();
    let z: Vec<f64> = (0..=n)
        .map(|j| {
            let t = 2.0 * j as f64 / n as f64 - 1.0;
            t + 0.3 * (PI * t).sin() / PI
        })
        .collect();
    let mut z = z;
    let m = z.len();
    for j in 0..m / 2 {
        z[m - 1 - j] = -z[j];
    }
    z[m / 2] = 0.0;
    let dom = DomainSpec {
        kind: DomainKind::WholeSpace,
        d: 0.0,
        truncation: Rect { r_max: 2.0, z_max: 1.0 },
    };
    Grid::from_coordinates(dom, r, z)
}

fn r4_error(n: usize) -> Result<f64> {
    let g = stretched(n)?;
    let op = assemble(&g)?;
    let l = op.apply_l(&g.field_from_fn(|r, _| r.powi(4)));
    Ok(op
        .nodes()
        .iter()
        .filter(|&&k| g.coords(k).0 > 0.1 + 1e-12)
        .map(|&k| (l[k] + 8.0).abs())
        .fold(0.0, f64::max))
}

fn operator_checks() -> Result<Check> {
    let g = whole(41, 41, 2.0, 1.0)?;
    let op = assemble(&g)?;
    let sym = op.matrix().is_symmetric();
    let l2 = op.apply_l(&g.field_from_fn(|r, _| r * r));
    let r2 = op.nodes().iter().map(|&k| l2[k].abs()).fold(0.0, f64::max);
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| r4_error(n)).collect::<Result<_>>()?;
    let order = (e[1] / e[2]).log2();
    let passed = sym && r2 < 1e-9 && order >= 1.9;
    Ok(check(
        "operator",
        passed,
        format!("symmetric {sym}, max|L r²| {r2:.2e}, r⁴ order on stretched grids {order:.3}"),
    ))
}

fn inverse_checks() -> Result<Check> {
    let g = whole(41, 41, 2.0, 1.5)?;
    let op = assemble(&g)?;
    let z1 = g.field_from_fn(|r, z| if (r - 0.8).powi(2) + z * z < 0.04 { 1.0 } else { 0.0 });
    let z2 = g.field_from_fn(|r, z| z1_at(r, z) + if (r - 1.2).powi(2) + z * z < 0.02 { 2.0 } else { 0.0 });
    fn z1_at(r: f64, z: f64) -> f64 {
        if (r - 0.8).powi(2) + z * z < 0.04 {
            1.0
        } else {
            0.0
        }
    }
    let p1 = op.apply_k(&z1)?;
    let p2 = op.apply_k(&z2)?;
    let positive = p1.as_slice().iter().all(|&v| v >= 0.0);
    let monotone = (0..g.len()).all(|k| p1[k] <= p2[k] + 1e-14);
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(g.nu().iter()).map(|((x, y), w)| x * y * w).sum() };
    let (a, b) = (dot(z1.as_slice(), p2.as_slice()), dot(z2.as_slice(), p1.as_slice()));
    let pairing = (a - b).abs() / a.abs();
    let mirror = (0..g.len()).map(|k| (p2[k] - p2[g.mirror_idx(k)]).abs()).fold(0.0, f64::max) / p2.max();
    let res = op.residual(&p2, &z2)?;
    let passed = positive && monotone && pairing < 1e-9 && mirror < 1e-12 && res <= op.options().tol;
    Ok(check(
        "inverse",
        passed,
        format!("positive {positive}, monotone {monotone}, pairing asymmetry {pairing:.1e}, mirror defect {mirror:.1e}, residual {res:.1e}"),
    ))
}

fn kernel_checks() -> Result<Check> {
    let pairs = kernel::random_pairs(200, 11, 1e-2, 10.0);
    let mut worst = 0.0f64;
    let mut bound_ok = true;
    for &(r, z, rp, zp) in &pairs {
        let a = kernel::ring_g(r, z, rp, zp, QuadControl::default())?;
        let b = kernel::ring_g_elliptic(r, z, rp, zp)?;
        worst = worst.max((a - b).abs() / b.abs());
        bound_ok &= a <= kernel::asinh_bound_2pi(r, z, rp, zp)?;
    }
    let at = |s: f64| -> Result<f64> {
        // points on the ray z = 0 with σ = s from (1, 0)
        let r = 1.0 + 2.0 * s * (1.0 + s * s).sqrt() + 2.0 * s * s;
        kernel::expansion_remainder(r, 0.0, 1.0, 0.0).map(f64::abs)
    };
    let base = at(0.1)?;
    let mut tail = 0.0f64;
    for k in 2..=12 {
        tail = tail.max(at(10f64.powf(-(k as f64) / 2.0))?);
    }
    let near = kernel::ring_green(1.0005, 0.0, 1.0, 0.0, KernelBackend::Quadrature)?;
    let passed = worst < 1e-8 && bound_ok && tail <= 2.0 * base && near.is_finite();
    Ok(check(
        "kernel",
        passed,
        format!("quadrature vs elliptic max rel {worst:.1e}, 1/(2π) bound holds {bound_ok}, remainder max {tail:.3e} vs σ=0.1 value {base:.3e}"),
    ))
}

fn prediction_checks() -> Result<Check> {
    let mut worst_identity = 0.0f64;
    let mut worst_root = 0.0f64;
    for (kind, d, w) in [
        (DomainKind::WholeSpace, 0.0, 1.0 / (2.0 * PI)),
        (DomainKind::WholeSpace, 0.0, 1.0 / (4.0 * PI)),
        (DomainKind::Cylinder, 2.0, 1.0 / (4.0 * PI)),
        (DomainKind::ExteriorBall, 1.0, 1.0 / (12.0 * PI)),
    ] {
        let p = predict(kind, d, w)?;
        // the dipole term of the exterior ball enters μ once and E once
        let dipole = if kind == DomainKind::ExteriorBall { w * d.powi(3) / (2.0 * p.r_star) } else { 0.0 };
        let id = p.mu_slope - 2.0 * p.e_slope - 0.5 * w * p.r_star * p.r_star + dipole;
        worst_identity = worst_identity.max(id.abs());
        let (lo, hi) = match kind {
            DomainKind::WholeSpace => (1e-3, 10.0),
            DomainKind::Cylinder => (1e-3, d),
            DomainKind::ExteriorBall => (d, 1.0 / (2.0 * PI * w)),
        };
        let f = |t: f64| match kind {
            DomainKind::ExteriorBall => gamma2(t, w, d),
            _ => gamma1(t, w),
        };
        worst_root = worst_root.max((golden_max(f, lo, hi) - p.r_star).abs());
    }
    let passed = worst_identity <= 1e-15 && worst_root < 1e-6;
    Ok(check(
        "predictions",
        passed,
        format!("slope identity defect {worst_identity:.1e}, r* vs Γ maximizer {worst_root:.1e}"),
    ))
}

/// Maximizer of a unimodal `f` on `[lo, hi]` after a coarse scan.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let i = (0..=n).max_by(|&a, &b| f(lo + a as f64 * h).total_cmp(&f(lo + b as f64 * h))).unwrap_or(0);
    let (mut a, mut b) = ((lo + (i as f64 - 1.0) * h).max(lo), (lo + (i as f64 + 1.0) * h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn solver_checks() -> Result<Check> {
    let setup = RingSetup::new(DomainKind::WholeSpace, 0.0, SolverParams::new(2e-2, 1.0 / (2.0 * PI)));
    let run = solve_ring(&setup)?;
    let sol = &run.solution;
    let g = &run.grid;
    let p = &run.setup.params;
    let admissible = run.support.admissible(g);
    let circ_err = (g.integrate_nu(&sol.zeta) - 1.0).abs();
    let adm = (0..g.len()).all(|k| sol.zeta[k] >= 0.0 && sol.zeta[k] <= p.zeta_max() && (admissible[k] || sol.zeta[k] == 0.0) && (g.mask()[k] == NodeKind::Interior || sol.zeta[k] == 0.0));
    let sym = (0..g.len()).all(|k| sol.zeta[k] == sol.zeta[g.mirror_idx(k)]);
    let b2 = p.beta * p.beta;
    let kkt = (0..g.len())
        .filter(|&k| sol.zeta[k] > 0.0 && sol.psi[k] > 0.0)
        .map(|k| {
            let r = g.coords(k).0;
            let lhs = sol.zeta[k] * r * r * b2;
            let rhs = sol.psi[k] + p.alpha * p.beta * r * r;
            (lhs - rhs).abs() / rhs.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    let monotone = sol.energy_trace.windows(2).all(|w| w[1] >= w[0] - 1e-11 * (1.0 + w[0].abs()));
    let passed = sol.converged && circ_err <= 1e-6 && adm && sym && kkt < 1e-10 && sol.cap_active_measure == 0.0 && monotone;
    Ok(check(
        "solver_contract",
        passed,
        format!(
            "converged {}, |circ−1| {circ_err:.1e}, admissible {adm}, z-symmetric {sym}, KKT defect {kkt:.1e}, cap measure {:.1e}, energy monotone {monotone}",
            sol.converged, sol.cap_active_measure
        ),
    ))
}

fn config_checks() -> Result<Check> {
    use super::config::parse_config;
    let minimal = parse_config("[domain]\nkind = \"whole_space\"\n[params]\nbeta = 0.01\nW = 0.1\n");
    let defaults = minimal.as_ref().is_ok_and(|c| c.solver_params(c.beta()).cap() == 10.0);
    let bad_beta = parse_config("[domain]\nkind = \"whole_space\"\n[params]\nbeta = 1.5\nW = 0.1\n")
        .err()
        .is_some_and(|e| e.to_string().contains("β must lie in (0,1)"));
    let unknown = parse_config("[domain]\nkind = \"whole_space\"\nshape = 1\n[params]\nbeta = 0.01\nW = 0.1\n")
        .err()
        .is_some_and(|e| e.to_string().contains("shape"));
    let few = asymptotics::check_betas(&[0.01]).err().is_some_and(|e| e.to_string().contains("≥3 required"));
    let passed = defaults && bad_beta && unknown && few;
    Ok(check(
        "config",
        passed,
        format!("defaults {defaults}, β range {bad_beta}, unknown keys {unknown}, short β list {few}"),
    ))
}
