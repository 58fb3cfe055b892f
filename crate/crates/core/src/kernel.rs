//! Free-space ring kernel `G(r, z; r′, z′)` of the operator `L`.
//!
//! `G = (r r′ / 2π) ∫₀^π cos θ dθ / [(z − z′)² + r² + r′² − 2 r r′ cos θ]^{1/2}`
//! is the stream function at `(r, z)` induced by a unit-circulation ring at
//! `(r′, z′)` in the measure `r′ dr′ dz′`. Two independent backends are provided:
//! adaptive Gauss–Kronrod quadrature of the θ integral, and the closed form in
//! complete elliptic integrals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this separation the quadrature backend switches to the logarithmic expansion.
pub const NEAR_FIELD_SIGMA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelBackend {
    #[default]
    Quadrature,
    Elliptic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadControl {
    fn default() -> Self {
        QuadControl {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSample {
    pub r: f64,
    pub z: f64,
    pub r_src: f64,
    pub z_src: f64,
    pub sigma: f64,
    pub g: f64,
    pub bound: f64,
    pub remainder: f64,
}

fn check_radii(r: f64, rp: f64) -> Result<()> {
    if !(r > 0.0 && rp > 0.0) {
        return Err(Error::param("r", format!("radii must be positive, got r={r}, r'={rp}")));
    }
    Ok(())
}

/// Dimensionless separation `[(r − r′)² + (z − z′)²]^{1/2} / (4 r r′)^{1/2}`.
pub fn sigma(r: f64, z: f64, rp: f64, zp: f64) -> Result<f64> {
    check_radii(r, rp)?;
    Ok(((r - rp).powi(2) + (z - zp).powi(2)).sqrt() / (4.0 * r * rp).sqrt())
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1], as tabulated
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, ctl: QuadControl) -> Result<f64> {
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(f, a, b);
    pieces.push((a, b, v, e));
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= ctl.abs_tol.max(ctl.rel_tol * total.abs()) {
            return Ok(total);
        }
        if pieces.len() >= ctl.max_intervals {
            return Err(Error::Quadrature { estimate: err });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::Quadrature { estimate: err });
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// `G` by adaptive quadrature of the θ integral.
///
/// Fails with [`Error::Quadrature`] when the logarithmic peak at θ = 0 is too sharp
/// for the interval budget; callers should then use the near-field expansion.
pub fn ring_g(r: f64, z: f64, rp: f64, zp: f64, ctl: QuadControl) -> Result<f64> {
    let s = sigma(r, z, rp, zp)?;
    if s == 0.0 {
        return Err(Error::param("points", "source and target coincide"));
    }
    // written in terms of σ and sin(θ/2) to avoid cancellation in r² + r′² − 2rr′cosθ
    let s2 = s * s;
    let integrand = move |t: f64| {
        let sh = (0.5 * t).sin();
        t.cos() / (4.0 * s2 + 4.0 * sh * sh).sqrt()
    };
    let val = integrate_adaptive(&integrand, 0.0, PI, ctl)?;
    Ok((r * rp).sqrt() / (2.0 * PI) * val)
}

/// Complete elliptic integrals `(K(m), E(m))` with parameter `m = k²`, by the AGM.
pub fn ellip_ke(m: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&m), "parameter must lie in [0, 1)");
    ellip_ke_split(m, 1.0 - m)
}

// takes the complementary parameter separately so that m → 1 keeps full precision
fn ellip_ke_split(m: f64, mc: f64) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = mc.sqrt();
    let mut c = m.sqrt();
    let mut c2sum = 0.5 * m;
    let mut pow = 0.5;
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        // c_{n+1} = c_n² / (4 a_{n+1}) avoids the cancellation in (a − b) / 2
        c = c * c / (4.0 * an);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        let term = pow * c * c;
        c2sum += term;
        if term <= 1e-18 * c2sum {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - c2sum))
}

// (2 − m)K(m) − 2E(m) without cancellation: (π/2) Σ_{n≥2} a_{n−1}² (n−1)/n mⁿ,
// a_n = (2n)! / (4ⁿ n!²)
fn ke_combination_series(m: f64) -> f64 {
    let mut a = 0.5; // a_1
    let mut mn = m * m;
    let mut sum = 0.0;
    for n in 2..400 {
        let term = a * a * (n - 1) as f64 / n as f64 * mn;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        a *= (2 * n - 1) as f64 / (2 * n) as f64;
        mn *= m;
    }
    0.5 * PI * sum
}

/// `G` in closed form: `(√(rr′)/(2πk)) [(2 − k²) K(k) − 2 E(k)]`, `k² = 4rr′ / ((r + r′)² + (z − z′)²)`.
pub fn ring_g_elliptic(r: f64, z: f64, rp: f64, zp: f64) -> Result<f64> {
    check_radii(r, rp)?;
    let den = (r + rp).powi(2) + (z - zp).powi(2);
    let m = 4.0 * r * rp / den;
    let mc = ((r - rp).powi(2) + (z - zp).powi(2)) / den;
    if mc == 0.0 {
        return Err(Error::param("points", "source and target coincide"));
    }
    let comb = if m < 0.5 {
        ke_combination_series(m)
    } else {
        let (k, e) = ellip_ke_split(m, mc);
        (2.0 - m) * k - 2.0 * e
    };
    Ok((r * rp).sqrt() / (2.0 * PI * m.sqrt()) * comb)
}

fn singular_part(s: f64) -> f64 {
    ((1.0 / s).ln() + (1.0 + (s * s + 1.0).sqrt()).ln()) / (2.0 * PI)
}

/// Bounded remainder `f = [G − (√(rr′)/2π)(log(1/σ) + log(1 + √(σ² + 1)))] / √(rr′)`.
pub fn expansion_remainder(r: f64, z: f64, rp: f64, zp: f64) -> Result<f64> {
    let s = sigma(r, z, rp, zp)?;
    if s == 0.0 {
        return Err(Error::param("points", "source and target coincide"));
    }
    let g = ring_g_elliptic(r, z, rp, zp)?;
    Ok(g / (r * rp).sqrt() - singular_part(s))
}

/// `G` with the requested backend. The quadrature backend evaluates pairs with
/// `σ < NEAR_FIELD_SIGMA` through the expansion, with the remainder sampled at
/// the point on the same ray where `σ` reaches the threshold.
pub fn ring_green(r: f64, z: f64, rp: f64, zp: f64, backend: KernelBackend) -> Result<f64> {
    match backend {
        KernelBackend::Elliptic => ring_g_elliptic(r, z, rp, zp),
        KernelBackend::Quadrature => {
            let s = sigma(r, z, rp, zp)?;
            if s >= NEAR_FIELD_SIGMA {
                return ring_g(r, z, rp, zp, QuadControl::default());
            }
            if s == 0.0 {
                return Err(Error::param("points", "source and target coincide"));
            }
            let scale = NEAR_FIELD_SIGMA / s;
            let (rq, zq) = (rp + (r - rp) * scale, zp + (z - zp) * scale);
            let sq = sigma(rq, zq, rp, zp)?;
            let f = ring_g(rq, zq, rp, zp, QuadControl::default())? / (rq * rp).sqrt() - singular_part(sq);
            Ok((r * rp).sqrt() * (singular_part(s) + f))
        }
    }
}

/// `(r r′)^{1/2} / (4π) · asinh(1/σ)`, the bound as it is usually quoted.
///
/// It does not hold for `σ ≲ 0.2`: the leading term of `G` is `(√(rr′)/2π) log(1/σ)`,
/// twice the bound's. See [`asinh_bound_2pi`].
pub fn asinh_bound(r: f64, z: f64, rp: f64, zp: f64) -> Result<f64> {
    let s = sigma(r, z, rp, zp)?;
    Ok((r * rp).sqrt() / (4.0 * PI) * (1.0 / s).asinh())
}

/// `(r r′)^{1/2} / (2π) · asinh(1/σ)`, which does bound `G` for all `σ > 0`.
pub fn asinh_bound_2pi(r: f64, z: f64, rp: f64, zp: f64) -> Result<f64> {
    Ok(2.0 * asinh_bound(r, z, rp, zp)?)
}

pub fn sample(r: f64, z: f64, rp: f64, zp: f64, backend: KernelBackend) -> Result<KernelSample> {
    Ok(KernelSample {
        r,
        z,
        r_src: rp,
        z_src: zp,
        sigma: sigma(r, z, rp, zp)?,
        g: ring_green(r, z, rp, zp, backend)?,
        bound: asinh_bound(r, z, rp, zp)?,
        remainder: expansion_remainder(r, z, rp, zp)?,
    })
}

/// Random point pairs with `r, r′ ∈ [0.1, 2]`, `z, z′ ∈ [−2, 2]` and `σ ∈ [σ_lo, σ_hi]`.
pub fn random_pairs(n: usize, seed: u64, sigma_lo: f64, sigma_hi: f64) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rp = rng.gen_range(0.1..2.0);
        let zp = rng.gen_range(-2.0..2.0);
        // log-uniform target separation, random direction
        let s: f64 = rng.gen_range(sigma_lo.ln()..sigma_hi.ln()).exp();
        let th = rng.gen_range(0.0..2.0 * PI);
        // solve for a radius giving the target σ approximately, then accept on range
        let dist = s * 2.0 * rp;
        let (r, z) = (rp + dist * th.cos(), zp + dist * th.sin());
        if r <= 0.0 {
            continue;
        }
        if let Ok(sv) = sigma(r, z, rp, zp) {
            if sv >= sigma_lo && sv <= sigma_hi {
                out.push((r, z, rp, zp));
            }
        }
    }
    out
}

/// Samples for the `kernel-check` report.
pub fn kernel_samples(n: usize, seed: u64, backend: KernelBackend) -> Result<Vec<KernelSample>> {
    random_pairs(n, seed, 1e-2, 10.0)
        .into_iter()
        .map(|(r, z, rp, zp)| sample(r, z, rp, zp, backend))
        .collect()
}
