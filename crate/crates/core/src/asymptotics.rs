//! Closed-form small-core predictions and the β-sweep driver.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::geometry::DomainKind;
use crate::variational::{solve_ring, RingRun, RingSetup};

/// Leading-order predictions for the coefficients of `log(1/β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub r_star: f64,
    pub mu_slope: f64,
    pub e_slope: f64,
    /// The ring translates at this coefficient times `log(1/β)`.
    pub translation_speed_coeff: f64,
}

/// `Γ₁(t) = t/2π − W t²`.
pub fn gamma1(t: f64, w: f64) -> f64 {
    t / (2.0 * PI) - w * t * t
}

/// Maximizer of `Γ₁` on `[0, d]`: `1/(4πW)` when that lies inside, else `d`.
/// Pass `d = ∞` for the whole space.
pub fn r_star_interior(w: f64, d: f64) -> f64 {
    if w > 1.0 / (4.0 * PI * d) {
        1.0 / (4.0 * PI * w)
    } else {
        d
    }
}

/// `Γ₂(t) = t/2π − W t² + W d³/t`.
pub fn gamma2(t: f64, w: f64, d: f64) -> f64 {
    t / (2.0 * PI) - w * t * t + w * d.powi(3) / t
}

/// `Γ₂′(t) = 1/2π − 2Wt − W d³/t²`.
pub fn gamma2_prime(t: f64, w: f64, d: f64) -> f64 {
    1.0 / (2.0 * PI) - 2.0 * w * t - w * d.powi(3) / (t * t)
}

/// Maximizer of `Γ₂` on `[d, ∞)`: `d` when `W ≥ 1/(6πd)`, else the root of `Γ₂′`
/// bracketed by `[d, 1/(2πW)]`.
pub fn r_star_exterior(w: f64, d: f64) -> Result<f64> {
    if !(w > 0.0 && d > 0.0) {
        return Err(Error::param("W", "W and d must be positive"));
    }
    if w >= 1.0 / (6.0 * PI * d) {
        return Ok(d);
    }
    let (mut lo, mut hi) = (d, 1.0 / (2.0 * PI * w));
    let (flo, fhi) = (gamma2_prime(lo, w, d), gamma2_prime(hi, w, d));
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::Bracket(format!(
            "Γ₂′ does not change sign on [{lo}, {hi}] (values {flo:.3e}, {fhi:.3e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if gamma2_prime(mid, w, d) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Predictions for a geometry; `d` is ignored for the whole space.
pub fn predict(kind: DomainKind, d: f64, w: f64) -> Result<Prediction> {
    if !(w > 0.0) {
        return Err(Error::param("W", "W must be positive"));
    }
    let (r, dipole) = match kind {
        DomainKind::Cylinder => (r_star_interior(w, d), 0.0),
        DomainKind::WholeSpace => (r_star_interior(w, f64::INFINITY), 0.0),
        DomainKind::ExteriorBall => {
            let r = r_star_exterior(w, d)?;
            (r, w * d.powi(3) / (2.0 * r))
        }
    };
    Ok(Prediction {
        r_star: r,
        mu_slope: r / (2.0 * PI) - 0.5 * w * r * r + dipole,
        e_slope: r / (4.0 * PI) - 0.5 * w * r * r + dipole,
        translation_speed_coeff: w,
    })
}

/// Thin-ring translation speed `(κ/4πr)(log(8r/ε) − 1/4)`.
pub fn kelvin_hicks_speed(kappa: f64, r_star: f64, eps: f64) -> f64 {
    kappa / (4.0 * PI * r_star) * ((8.0 * r_star / eps).ln() - 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Least-squares line `value ≈ slope · log(1/β) + intercept`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<LogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 points, got {}", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| (1.0 / p.0).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-12 * (1.0 + mx * mx)) {
        return Err(Error::DegenerateFit("all β values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(LogFit {
        slope,
        intercept,
        max_residual,
    })
}

/// One member of a sweep: the run and its diagnostics, or the reason it failed.
#[derive(Debug, Clone)]
pub struct SweepMember {
    pub beta: f64,
    pub setup: RingSetup,
    pub run: Option<RingRun>,
    pub record: Option<DiagnosticsRecord>,
    pub error: Option<String>,
}

/// Sorts and checks a β list: at least three distinct values in `(0, 1)`, largest first.
pub fn check_betas(betas: &[f64]) -> Result<Vec<f64>> {
    if betas.len() < 3 {
        return Err(Error::param("betas", format!("≥3 required, got {}", betas.len())));
    }
    let mut b = betas.to_vec();
    if b.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::param("betas", "β must lie in (0,1)"));
    }
    b.sort_by(|x, y| y.total_cmp(x));
    if b.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("betas", "values must be distinct"));
    }
    Ok(b)
}

/// Independent solves for each β (in parallel), with diagnostics seeded by `seed`.
/// A failing member is recorded and the sweep continues; the sweep fails only if
/// every member does.
pub fn run_sweep(base: &RingSetup, betas: &[f64], seed: u64) -> Result<Vec<SweepMember>> {
    let betas = check_betas(betas)?;
    let members: Vec<SweepMember> = betas
        .par_iter()
        .map(|&beta| {
            let mut setup = base.clone();
            setup.params.beta = beta;
            match solve_ring(&setup).and_then(|run| diagnostics::record(&run, seed).map(|rec| (run, rec))) {
                Ok((run, rec)) => SweepMember {
                    beta,
                    setup,
                    run: Some(run),
                    record: Some(rec),
                    error: None,
                },
                Err(e) => {
                    warn!("sweep member beta = {beta} failed: {e}");
                    SweepMember {
                        beta,
                        setup,
                        run: None,
                        record: None,
                        error: Some(format!("{}: {e}", e.code())),
                    }
                }
            }
        })
        .collect();
    if members.iter().all(|m| m.record.is_none()) {
        let reasons: Vec<String> = members.iter().filter_map(|m| m.error.clone()).collect();
        return Err(Error::Sweep(format!("every member failed: {}", reasons.join("; "))));
    }
    Ok(members)
}

/// Slope fits of `μ` and `E` against `log(1/β)` over the successful members.
pub fn sweep_fits(members: &[SweepMember]) -> Result<(LogFit, LogFit)> {
    let ok: Vec<&DiagnosticsRecord> = members.iter().filter_map(|m| m.record.as_ref()).collect();
    let mu: Vec<(f64, f64)> = ok.iter().map(|r| (r.beta, r.mu)).collect();
    let e: Vec<(f64, f64)> = ok.iter().map(|r| (r.beta, r.energy)).collect();
    Ok((fit_log_slope(&mu)?, fit_log_slope(&e)?))
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "status",
    "r_star",
    "mu_pred",
    "E_pred",
    "mu_fit_residual",
    "E_fit_residual",
];

/// Writes the sweep table: one row per member, the diagnostics columns followed by
/// predicted slope terms and residuals against the fitted lines.
pub fn write_sweep_csv<W: Write>(mut w: W, members: &[SweepMember], pred: &Prediction, precision: usize) -> Result<()> {
    let fits = sweep_fits(members).ok();
    let mut header: Vec<&str> = vec!["beta"];
    header.extend(diagnostics::RECORD_KEYS.iter().filter(|k| **k != "beta"));
    header.extend(SWEEP_COLUMNS);
    writeln!(w, "{}", header.join(","))?;
    for m in members {
        let l = (1.0 / m.beta).ln();
        let mut cols = vec![format!("{:.*e}", precision, m.beta)];
        match &m.record {
            Some(rec) => {
                for (k, v) in rec.entries() {
                    if k != "beta" {
                        cols.push(v.render(precision));
                    }
                }
                cols.push("ok".into());
            }
            None => {
                cols.extend(diagnostics::RECORD_KEYS.iter().skip(1).map(|_| String::from("nan")));
                cols.push(m.error.clone().unwrap_or_default().replace(',', ";"));
            }
        }
        cols.push(format!("{:.*e}", precision, pred.r_star));
        cols.push(format!("{:.*e}", precision, pred.mu_slope * l));
        cols.push(format!("{:.*e}", precision, pred.e_slope * l));
        match (&fits, &m.record) {
            (Some((fm, fe)), Some(rec)) => {
                cols.push(format!("{:.*e}", precision, rec.mu - fm.slope * l - fm.intercept));
                cols.push(format!("{:.*e}", precision, rec.energy - fe.slope * l - fe.intercept));
            }
            _ => {
                cols.push("nan".into());
                cols.push("nan".into());
            }
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_examples() {
        assert!((r_star_interior(1.0 / (4.0 * PI), 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(r_star_interior(0.01, 2.0), 2.0);
        let w = 0.3;
        let r = r_star_interior(w, 10.0);
        assert!((gamma1(r, w) - 1.0 / (16.0 * PI * PI * w)).abs() < 1e-15);
    }

    #[test]
    fn exterior_examples() {
        let d = 1.7;
        assert_eq!(r_star_exterior(1.0 / (6.0 * PI * d), d).unwrap(), d);
        let r = r_star_exterior(1.0 / (12.0 * PI), 1.0).unwrap();
        assert!((2.0 * r.powi(3) - 6.0 * r * r + 1.0).abs() < 1e-12);
        assert!((r - 2.942_241_85).abs() < 1e-8);
    }

    #[test]
    fn slopes_and_identity() {
        let w = 1.0 / (4.0 * PI);
        let p = predict(DomainKind::WholeSpace, 0.0, w).unwrap();
        assert!((p.mu_slope - 3.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((p.e_slope - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((p.mu_slope - 3.0 / (32.0 * PI * PI * w)).abs() < 1e-15);
        assert!((p.mu_slope - (2.0 * p.e_slope + 0.5 * w * p.r_star.powi(2))).abs() < 1e-15);
    }

    #[test]
    fn kelvin_hicks_examples() {
        assert!((kelvin_hicks_speed(1.0, 1.0, 8.0) + 1.0 / (16.0 * PI)).abs() < 1e-15);
        assert!((kelvin_hicks_speed(2.0, 0.7, 1e-3) - 2.0 * kelvin_hicks_speed(1.0, 0.7, 1e-3)).abs() < 1e-14);
        let w = 0.2;
        let r = 1.0 / (4.0 * PI * w);
        let beta: f64 = 1e-4;
        let expect = w * (1.0 / beta).ln() + w * ((8.0 * r).ln() - 0.25);
        assert!((kelvin_hicks_speed(1.0, r, beta) - expect).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = [1e-2, 3e-3, 1e-3].iter().map(|&b: &f64| (b, 2.0 * (1.0 / b).ln() + 5.0)).collect();
        let f = fit_log_slope(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 5.0).abs() < 1e-11 && f.max_residual < 1e-11);
        assert!(fit_log_slope(&pts[..2]).is_err());
        assert!(fit_log_slope(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
    }

    #[test]
    fn beta_lists() {
        assert!(check_betas(&[1e-2]).unwrap_err().to_string().contains("≥3 required"));
        assert_eq!(check_betas(&[1e-3, 1e-2, 3e-3]).unwrap(), vec![1e-2, 3e-3, 1e-3]);
    }
}
