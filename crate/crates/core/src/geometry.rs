//! Admissible meridional domains, tensor-product grids and the measure `ν = r dr dz`.
//!
//! A grid covers the truncation rectangle `[0, R_max] × [−Z_max, Z_max]` of the
//! meridional half-plane. Nodes are stored r-major with z varying fastest, so node
//! `(i, j)` lives at `i * n_z + j`.

use std::fmt;
use std::io::Write;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    /// `{0 < r < d}`: the inside of an infinite pipe.
    Cylinder,
    /// `{r² + z² > d²}`: the outside of a ball.
    ExteriorBall,
    /// The whole half-plane.
    WholeSpace,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Cylinder => "cylinder",
            DomainKind::ExteriorBall => "exterior_ball",
            DomainKind::WholeSpace => "whole_space",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cylinder" => Ok(DomainKind::Cylinder),
            "exterior_ball" | "exteriorball" => Ok(DomainKind::ExteriorBall),
            "whole_space" | "wholespace" => Ok(DomainKind::WholeSpace),
            other => Err(Error::InvalidDomain(format!("unknown domain kind `{other}`"))),
        }
    }
}

/// Upper-right corner of a rectangle `[0, r_max] × [−z_max, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub r_max: f64,
    pub z_max: f64,
}

/// Extra room between the admissible support box and the truncation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub r: f64,
    pub z: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { r: 1.5, z: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Wall radius (cylinder) or ball radius (exterior ball). Ignored for the whole space.
    pub d: f64,
    pub truncation: Rect,
}

impl DomainSpec {
    /// Whether a meridional point lies in the open admissible set (ignoring truncation).
    pub fn contains(&self, r: f64, z: f64) -> bool {
        match self.kind {
            DomainKind::Cylinder => r > 0.0 && r < self.d,
            DomainKind::ExteriorBall => r > 0.0 && r * r + z * z > self.d * self.d,
            DomainKind::WholeSpace => r > 0.0,
        }
    }
}

/// Builds a domain whose truncation rectangle covers `support` plus `margins`.
///
/// For the cylinder the wall itself is the radial truncation, so `R_max = d` and only
/// the z margin is used.
pub fn make_domain(kind: DomainKind, d: f64, support: Rect, margins: Margins) -> Result<DomainSpec> {
    if kind != DomainKind::WholeSpace && !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidDomain(format!("d must be positive, got {d}")));
    }
    if !(margins.z > 0.0) || (kind != DomainKind::Cylinder && !(margins.r > 0.0)) {
        return Err(Error::InvalidDomain(format!(
            "margins must be positive (got r={}, z={}); the truncation would cut into the support box",
            margins.r, margins.z
        )));
    }
    if !(support.r_max > 0.0 && support.z_max > 0.0) {
        return Err(Error::InvalidDomain("support box must have positive extent".into()));
    }
    let truncation = match kind {
        DomainKind::Cylinder => {
            if support.r_max > d * (1.0 + 1e-12) {
                return Err(Error::InvalidDomain(format!(
                    "support box r extent {} exceeds the wall radius {d}",
                    support.r_max
                )));
            }
            Rect {
                r_max: d,
                z_max: support.z_max + margins.z,
            }
        }
        DomainKind::ExteriorBall | DomainKind::WholeSpace => Rect {
            r_max: support.r_max + margins.r,
            z_max: support.z_max + margins.z,
        },
    };
    Ok(DomainSpec {
        kind,
        d: if kind == DomainKind::WholeSpace { d.max(0.0) } else { d },
        truncation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Interior,
    DirichletBoundary,
    Excluded,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::DirichletBoundary => "dirichlet",
            NodeKind::Excluded => "excluded",
        }
    }
}

/// Per-node quadrature weight for `ν`: trapezoidal cell area times nodal `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuWeight(Vec<f64>);

impl NuWeight {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Deref for NuWeight {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Local refinement band around the expected core location.
///
/// Inside the band the spacing is `h_fine`; outside it grows geometrically by
/// `growth` per cell up to `h_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementBand {
    pub r_center: f64,
    pub r_half_width: f64,
    pub z_half_width: f64,
    pub h_fine: f64,
    pub growth: f64,
    pub h_max: f64,
}

/// Resolution rule for solver grids, with lengths in units of the core scale `β`
/// inside the band and absolute outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub h_fine_per_beta: f64,
    pub band_r_half_per_beta: f64,
    pub band_z_half_per_beta: f64,
    /// Lower bound on the radial half-width of the band.
    pub band_r_half_min: f64,
    pub growth: f64,
    pub h_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            h_fine_per_beta: 0.2,
            band_r_half_per_beta: 25.0,
            band_z_half_per_beta: 8.0,
            band_r_half_min: 0.0,
            growth: 1.1,
            h_max: 0.05,
        }
    }
}

impl GridSpec {
    pub fn band(&self, beta: f64, r_center: f64) -> RefinementBand {
        RefinementBand {
            r_center,
            r_half_width: (self.band_r_half_per_beta * beta).max(self.band_r_half_min),
            z_half_width: self.band_z_half_per_beta * beta,
            h_fine: self.h_fine_per_beta * beta,
            growth: self.growth,
            h_max: self.h_max.max(self.h_fine_per_beta * beta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: DomainSpec,
    r: Vec<f64>,
    z: Vec<f64>,
    mask: Vec<NodeKind>,
    nu: NuWeight,
    // trapezoidal cell widths, reused by integrals over dm₂
    dr: Vec<f64>,
    dz: Vec<f64>,
}

/// Uniform grid with `n_r × n_z` nodes over the truncation rectangle.
pub fn make_grid(domain: &DomainSpec, n_r: usize, n_z: usize) -> Result<Grid> {
    if n_r < 16 || n_z < 16 {
        return Err(Error::InvalidGrid(format!("need n_r, n_z >= 16, got {n_r} x {n_z}")));
    }
    if n_z.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("n_z must be odd so z = 0 is a grid line, got {n_z}")));
    }
    let rm = domain.truncation.r_max;
    let zm = domain.truncation.z_max;
    let r: Vec<f64> = (0..n_r).map(|i| rm * i as f64 / (n_r - 1) as f64).collect();
    let half = (n_z - 1) / 2;
    let zpos: Vec<f64> = (0..=half).map(|j| zm * j as f64 / half as f64).collect();
    Grid::from_coordinates(domain.clone(), r, mirror(&zpos))
}

/// Tensor grid with a fine band around `(band.r_center, 0)`.
pub fn make_refined_grid(domain: &DomainSpec, band: &RefinementBand) -> Result<Grid> {
    let rm = domain.truncation.r_max;
    let zm = domain.truncation.z_max;
    if !(band.h_fine > 0.0 && band.growth >= 1.0 && band.h_max >= band.h_fine) {
        return Err(Error::InvalidGrid(format!("bad refinement band {band:?}")));
    }
    if !(band.r_center > 0.0 && band.r_center < rm) {
        return Err(Error::InvalidGrid(format!(
            "band centre {} outside (0, {rm})",
            band.r_center
        )));
    }
    let left = graded_offsets(band.r_center, band.r_half_width, band.h_fine, band.growth, band.h_max);
    let right = graded_offsets(rm - band.r_center, band.r_half_width, band.h_fine, band.growth, band.h_max);
    let mut r: Vec<f64> = left.iter().rev().map(|o| band.r_center - o).collect();
    r.extend(right.iter().skip(1).map(|o| band.r_center + o));
    r[0] = 0.0;
    *r.last_mut().unwrap() = rm;
    let zpos = graded_offsets(zm, band.z_half_width, band.h_fine, band.growth, band.h_max);
    let mut zpos = zpos;
    *zpos.last_mut().unwrap() = zm;
    let grid = Grid::from_coordinates(domain.clone(), r, mirror(&zpos))?;
    if grid.n_r() < 16 || grid.n_z() < 16 {
        return Err(Error::InvalidGrid(format!(
            "refined grid too small ({} x {})",
            grid.n_r(),
            grid.n_z()
        )));
    }
    Ok(grid)
}

/// Offsets `0 = o_0 < o_1 < … < o_n = length`, spacing `h` up to `fine`, then
/// geometric growth capped at `h_max`. The graded part is rescaled so the last
/// offset lands exactly on `length`.
fn graded_offsets(length: f64, fine: f64, h: f64, growth: f64, h_max: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if fine >= length {
        let n = (length / h).ceil().max(1.0) as usize;
        return (0..=n).map(|k| length * k as f64 / n as f64).collect();
    }
    let n_fine = (fine / h).round().max(1.0) as usize;
    for k in 1..=n_fine {
        out.push(k as f64 * h);
    }
    let start = *out.last().unwrap();
    if start >= length {
        let n = out.len() - 1;
        return (0..=n).map(|k| length * k as f64 / n as f64).collect();
    }
    let mut step = h;
    let mut pos = start;
    let mut tail = Vec::new();
    while pos < length {
        step = (step * growth).min(h_max);
        pos += step;
        tail.push(pos);
    }
    // drop a sliver of a last cell by merging it into the previous one
    if tail.len() >= 2 {
        let last = tail[tail.len() - 1];
        let prev = tail[tail.len() - 2];
        if length - prev < 0.5 * (last - prev) {
            tail.pop();
        }
    }
    let end = *tail.last().unwrap();
    let scale = (length - start) / (end - start);
    out.extend(tail.iter().map(|p| start + (p - start) * scale));
    *out.last_mut().unwrap() = length;
    out
}

fn mirror(zpos: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = zpos.iter().rev().map(|v| -v).collect();
    z.extend(zpos.iter().skip(1).copied());
    let n = z.len();
    z[n / 2] = 0.0;
    z
}

// cell index and fractional position of `x` in the sorted coordinates `xs`
fn locate(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = xs.len();
    if !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
    Some((i, (x - xs[i]) / (xs[i + 1] - xs[i])))
}

fn trapezoid_widths(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let lo = if k == 0 { x[0] } else { 0.5 * (x[k - 1] + x[k]) };
            let hi = if k + 1 == n { x[n - 1] } else { 0.5 * (x[k] + x[k + 1]) };
            hi - lo
        })
        .collect()
}

impl Grid {
    /// Builds a grid from explicit coordinate arrays.
    ///
    /// `r` must start at 0 and increase strictly; `z` must increase strictly and be
    /// exactly symmetric about 0 with an odd number of entries.
    pub fn from_coordinates(domain: DomainSpec, r: Vec<f64>, z: Vec<f64>) -> Result<Grid> {
        if r.len() < 3 || z.len() < 3 {
            return Err(Error::InvalidGrid("need at least 3 nodes per direction".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::InvalidGrid("r coordinates must start at the axis".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) || z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("coordinates must be strictly increasing".into()));
        }
        let nz = z.len();
        if nz.is_multiple_of(2) || (0..nz).any(|j| z[j] != -z[nz - 1 - j]) {
            return Err(Error::InvalidGrid("z coordinates must be symmetric about 0".into()));
        }
        let nr = r.len();
        let mut mask = vec![NodeKind::Interior; nr * nz];
        let ball = domain.kind == DomainKind::ExteriorBall;
        let d2 = domain.d * domain.d;
        for i in 0..nr {
            for j in 0..nz {
                let k = i * nz + j;
                if ball && r[i] * r[i] + z[j] * z[j] < d2 {
                    mask[k] = NodeKind::Excluded;
                } else if i == 0 || i == nr - 1 || j == 0 || j == nz - 1 {
                    mask[k] = NodeKind::DirichletBoundary;
                }
            }
        }
        if ball {
            // staircase wall: survivors touching an excluded node carry Dirichlet data
            let snapshot = mask.clone();
            for i in 0..nr {
                for j in 0..nz {
                    let k = i * nz + j;
                    if snapshot[k] != NodeKind::Interior {
                        continue;
                    }
                    let touches = (i > 0 && snapshot[k - nz] == NodeKind::Excluded)
                        || (i + 1 < nr && snapshot[k + nz] == NodeKind::Excluded)
                        || snapshot[k - 1] == NodeKind::Excluded
                        || snapshot[k + 1] == NodeKind::Excluded;
                    if touches {
                        mask[k] = NodeKind::DirichletBoundary;
                    }
                }
            }
        }
        let dr = trapezoid_widths(&r);
        let dz = trapezoid_widths(&z);
        let mut nu = vec![0.0; nr * nz];
        for i in 0..nr {
            for j in 0..nz {
                let k = i * nz + j;
                if mask[k] != NodeKind::Excluded {
                    nu[k] = r[i] * dr[i] * dz[j];
                }
            }
        }
        Ok(Grid {
            domain,
            r,
            z,
            mask,
            nu: NuWeight(nu),
            dr,
            dz,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    pub fn n_r(&self) -> usize {
        self.r.len()
    }
    pub fn n_z(&self) -> usize {
        self.z.len()
    }
    pub fn len(&self) -> usize {
        self.mask.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }
    pub fn nu(&self) -> &NuWeight {
        &self.nu
    }
    /// Trapezoidal widths in r.
    pub fn dr(&self) -> &[f64] {
        &self.dr
    }
    /// Trapezoidal widths in z.
    pub fn dz(&self) -> &[f64] {
        &self.dz
    }
    /// Index of the z = 0 line.
    pub fn z_mid(&self) -> usize {
        self.z.len() / 2
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.z.len() + j
    }
    /// Node index of the mirror image `(r, −z)`.
    #[inline]
    pub fn mirror_idx(&self, k: usize) -> usize {
        let nz = self.z.len();
        let (i, j) = (k / nz, k % nz);
        i * nz + (nz - 1 - j)
    }
    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let nz = self.z.len();
        (self.r[k / nz], self.z[k % nz])
    }
    /// Cell area in dm₂ (no factor r).
    #[inline]
    pub fn area(&self, k: usize) -> f64 {
        let nz = self.z.len();
        if self.mask[k] == NodeKind::Excluded {
            0.0
        } else {
            self.dr[k / nz] * self.dz[k % nz]
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.r
            .windows(2)
            .chain(self.z.windows(2))
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest spacing among cells touching the rectangle `[r0, r1] × [−zh, zh]`.
    pub fn max_spacing_in(&self, r0: f64, r1: f64, zh: f64) -> f64 {
        let mut h: f64 = 0.0;
        for w in self.r.windows(2) {
            if w[1] >= r0 && w[0] <= r1 {
                h = h.max(w[1] - w[0]);
            }
        }
        for w in self.z.windows(2) {
            if w[1] >= -zh && w[0] <= zh {
                h = h.max(w[1] - w[0]);
            }
        }
        h
    }

    /// Warning text when the core scale `β` is not resolved (`spacing > β/4`) near `r_center`.
    pub fn resolution_warning(&self, beta: f64, r_center: f64) -> Option<String> {
        let h = self.max_spacing_in(r_center - beta, r_center + beta, beta);
        (h > beta / 4.0).then(|| {
            format!("grid spacing {h:.3e} near r = {r_center:.4} exceeds beta/4 = {:.3e}; the core is under-resolved", beta / 4.0)
        })
    }

    /// Every interior node reaches a Dirichlet node through interior/Dirichlet neighbours.
    pub fn interior_connected(&self) -> bool {
        let (nr, nz) = (self.n_r(), self.n_z());
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = (0..self.len())
            .filter(|&k| self.mask[k] == NodeKind::DirichletBoundary)
            .collect();
        for &k in &stack {
            seen[k] = true;
        }
        while let Some(k) = stack.pop() {
            let (i, j) = (k / nz, k % nz);
            let mut push = |n: usize| {
                if !seen[n] && self.mask[n] == NodeKind::Interior {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                push(k - nz);
            }
            if i + 1 < nr {
                push(k + nz);
            }
            if j > 0 {
                push(k - 1);
            }
            if j + 1 < nz {
                push(k + 1);
            }
        }
        (0..self.len()).all(|k| self.mask[k] != NodeKind::Interior || seen[k])
    }

    /// Samples `f(r, z)` at every node.
    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut out = ScalarField::zeros(self.n_r(), self.n_z());
        for i in 0..self.n_r() {
            for j in 0..self.n_z() {
                out[(i, j)] = f(self.r[i], self.z[j]);
            }
        }
        out
    }

    /// `∫ f dν` with the nodal weights.
    pub fn integrate_nu(&self, f: &ScalarField) -> f64 {
        f.data.iter().zip(self.nu.iter()).map(|(a, w)| a * w).sum()
    }

    /// `∫ f dm₂` with trapezoidal cell areas.
    pub fn integrate_m2(&self, f: &ScalarField) -> f64 {
        (0..self.len()).map(|k| f.data[k] * self.area(k)).sum()
    }

    /// Bilinear interpolation of `f` at `(r, z)`; zero outside the truncation rectangle.
    pub fn interpolate(&self, f: &ScalarField, r: f64, z: f64) -> f64 {
        let (Some((i, tr)), Some((j, tz))) = (locate(&self.r, r), locate(&self.z, z)) else {
            return 0.0;
        };
        let nz = self.n_z();
        let k = i * nz + j;
        (1.0 - tr) * ((1.0 - tz) * f[k] + tz * f[k + 1]) + tr * ((1.0 - tz) * f[k + nz] + tz * f[k + nz + 1])
    }

    /// Resamples a field given on `other` onto this grid.
    pub fn resample(&self, other: &Grid, f: &ScalarField) -> ScalarField {
        self.field_from_fn(|r, z| other.interpolate(f, r, z))
    }

    /// Writes the grid dump: header `r_count z_count kind d`, then `i j r z mask nu_weight`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {} {:.16e}", self.n_r(), self.n_z(), self.domain.kind, self.domain.d)?;
        for i in 0..self.n_r() {
            for j in 0..self.n_z() {
                let k = self.idx(i, j);
                writeln!(
                    w,
                    "{i} {j} {:.16e} {:.16e} {} {:.16e}",
                    self.r[i],
                    self.z[j],
                    self.mask[k].as_str(),
                    self.nu[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Nodal data on a grid, r-major with z fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n_r: usize,
    n_z: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n_r: usize, n_z: usize) -> Self {
        ScalarField {
            n_r,
            n_z,
            data: vec![0.0; n_r * n_z],
        }
    }
    pub fn zeros_like(grid: &Grid) -> Self {
        Self::zeros(grid.n_r(), grid.n_z())
    }
    pub fn from_vec(n_r: usize, n_z: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_r * n_z, "field length mismatch");
        ScalarField { n_r, n_z, data }
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            n_r: self.n_r,
            n_z: self.n_z,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Writes `r z value` lines with 17 significant digits.
    pub fn write_dump<W: Write>(&self, grid: &Grid, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n_r {
            for j in 0..self.n_z {
                writeln!(
                    w,
                    "{:.16e} {:.16e} {:.16e}",
                    grid.r()[i],
                    grid.z()[j],
                    self.data[i * self.n_z + j]
                )?;
            }
        }
        Ok(())
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.data[k]
    }
}

impl IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.data[k]
    }
}

impl Index<(usize, usize)> for ScalarField {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_z + j]
    }
}

impl IndexMut<(usize, usize)> for ScalarField {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_z + j]
    }
}
