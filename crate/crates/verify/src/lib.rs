//! Reference computations for the acceptance suite. Nothing here calls into the
//! solver crate, so agreement with it is evidence rather than tautology.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre quadrature over the panels `breaks[k]..breaks[k+1]`.
pub fn composite(f: impl Fn(f64) -> f64, breaks: &[f64], order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    breaks
        .windows(2)
        .map(|p| {
            let (c, h) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
            x.iter().zip(&w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
        })
        .sum()
}

/// Ring kernel `(r r′/2π) ∫₀^π cos θ / ρ(θ) dθ` by brute force: 24-point
/// Gauss–Legendre on panels that double in width from the near-field scale
/// `θ ~ 2σ` out to `π`. The distance is written as `d² + 4rr′ sin²(θ/2)` so the
/// near-coincident case does not cancel.
pub fn ring_kernel(r: f64, z: f64, rp: f64, zp: f64) -> f64 {
    let d2 = (r - rp).powi(2) + (z - zp).powi(2);
    let s = (d2 / (4.0 * r * rp)).sqrt();
    let mut breaks = vec![0.0];
    let mut t = (2.0 * s / 16.0).min(PI / 4.0);
    while t < PI {
        breaks.push(t);
        t *= 2.0;
    }
    breaks.push(PI);
    let f = |th: f64| th.cos() / (d2 + 4.0 * r * rp * (0.5 * th).sin().powi(2)).sqrt();
    r * rp / (2.0 * PI) * composite(f, &breaks, 24)
}

/// Dimensionless separation.
pub fn separation(r: f64, z: f64, rp: f64, zp: f64) -> f64 {
    ((r - rp).powi(2) + (z - zp).powi(2)).sqrt() / (4.0 * r * rp).sqrt()
}

/// `G/√(rr′) − (log(1/σ) + log(1 + √(σ² + 1)))/2π` from the brute-force kernel.
pub fn kernel_remainder(r: f64, z: f64, rp: f64, zp: f64) -> f64 {
    let s = separation(r, z, rp, zp);
    ring_kernel(r, z, rp, zp) / (r * rp).sqrt() - ((1.0 / s).ln() + (1.0 + (s * s + 1.0).sqrt()).ln()) / (2.0 * PI)
}

/// The point at separation `sigma` from `(rp, zp)` along direction `angle`.
pub fn point_at_separation(rp: f64, zp: f64, angle: f64, sigma: f64) -> (f64, f64) {
    let (c, s) = (angle.cos(), angle.sin());
    // σ(t)² · 4 rp (rp + t c) = t², a quadratic in the distance t
    let a = 4.0 * rp * sigma * sigma;
    let t = 0.5 * (a * c + ((a * c).powi(2) + 4.0 * a * rp).sqrt());
    (rp + t * c, zp + t * s)
}

/// Random pairs with `r, r′ ∈ [0.1, 2]`, `z, z′ ∈ [−2, 2]` and `log σ` uniform on
/// `[log σ_lo, log σ_hi]`.
pub fn random_pairs(n: usize, seed: u64, sigma_lo: f64, sigma_hi: f64) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rp = rng.gen_range(0.1..2.0);
        let zp = rng.gen_range(-2.0..2.0);
        let s = rng.gen_range(sigma_lo.ln()..sigma_hi.ln()).exp();
        let (r, z) = point_at_separation(rp, zp, rng.gen_range(0.0..2.0 * PI), s);
        if (0.1..=2.0).contains(&r) && (-2.0..=2.0).contains(&z) {
            out.push((r, z, rp, zp));
        }
    }
    out
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Maximizer of `f` on `[lo, hi]` by two nested uniform scans of `n` points each:
/// the second covers the two cells around the best point of the first.
pub fn scan_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let best = |a: f64, b: f64| {
        let h = (b - a) / (n - 1) as f64;
        (0..n)
            .map(|i| a + i as f64 * h)
            .fold((a, f64::NEG_INFINITY), |acc, t| {
                let v = f(t);
                if v > acc.1 {
                    (t, v)
                } else {
                    acc
                }
            })
            .0
    };
    let h = (hi - lo) / (n - 1) as f64;
    let t = best(lo, hi);
    best((t - h).max(lo), (t + h).min(hi))
}

/// Root of `f` in `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Observed convergence order between successive errors on grids refined by `ratio`.
pub fn observed_orders(errors: &[f64], ratio: f64) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).ln() / ratio.ln()).collect()
}
