//! Two-dimensional ground-truth densities and the grid comparisons used to
//! judge learned toy energies.
//!
//! Grids are row-major with row `iy` running from the lower bound of the
//! second coordinate upward and column `ix` along the first coordinate.

use std::f64::consts::PI;
use std::fmt::Write;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{Energy, Tensor};
use crate::plot;
use crate::potential::analytic::{log_sum_exp, GaussianMixtureEnergy};

pub const TOY_SIGMA: f64 = 0.15;
pub const DEFAULT_RESOLUTION: usize = 200;
pub const DEFAULT_BANDWIDTH: f64 = 0.05;
const SHAPE: [usize; 1] = [2];
/// Kernel support in bandwidths; the neglected tail mass is below 1e-5.
const KDE_CUTOFF: f64 = 5.0;
const KDE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum ToyKind {
    Mixture { centers: Vec<[f64; 2]>, weights: Vec<f64> },
    Ring { radius: f64 },
}

/// A 2D ground-truth density with spread `sigma` along its most
/// constrained direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDensity {
    pub kind: ToyKind,
    pub sigma: f64,
    mixture: Option<GaussianMixtureEnergy>,
}

impl ToyDensity {
    pub fn mixture(centers: Vec<[f64; 2]>, weights: Vec<f64>, sigma: f64) -> Result<Self> {
        let energy = GaussianMixtureEnergy::new(centers.iter().map(|c| c.to_vec()).collect(), weights, sigma)?;
        Ok(Self {
            kind: ToyKind::Mixture {
                centers,
                weights: energy.weights.clone(),
            },
            sigma,
            mixture: Some(energy),
        })
    }

    pub fn ring(radius: f64, sigma: f64) -> Result<Self> {
        if !(radius > 0.0 && sigma > 0.0) {
            return Err(Error::Precondition("ring radius and sigma must be positive".into()));
        }
        Ok(Self {
            kind: ToyKind::Ring { radius },
            sigma,
            mixture: None,
        })
    }

    /// Three equal-weight modes on a circle of radius 0.5, `sigma = 0.15`.
    pub fn three_modes() -> Self {
        let centers = [90.0f64, 210.0, 330.0]
            .iter()
            .map(|a| {
                let t = a.to_radians();
                [0.5 * t.cos(), 0.5 * t.sin()]
            })
            .collect();
        Self::mixture(centers, vec![1.0; 3], TOY_SIGMA).expect("valid mixture")
    }

    /// Ring of radius 0.6, `sigma = 0.15` across the ring.
    pub fn default_ring() -> Self {
        Self::ring(0.6, TOY_SIGMA).expect("valid ring")
    }

    /// Mode locations (mixture centers; empty for a ring).
    pub fn modes(&self) -> Vec<[f64; 2]> {
        match &self.kind {
            ToyKind::Mixture { centers, .. } => centers.clone(),
            ToyKind::Ring { .. } => Vec::new(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mixture" | "three-modes" => Ok(Self::three_modes()),
            "ring" => Ok(Self::default_ring()),
            _ => Err(Error::Config(format!("unknown toy density `{name}`"))),
        }
    }

    /// Log density at a point whose distance from the origin is `rho`,
    /// for the ring: radius `R + sigma z` with a uniform angle.
    fn ring_terms(&self, radius: f64, rho: f64) -> (f64, f64, f64) {
        let s2 = self.sigma * self.sigma;
        let a = -0.5 * (rho - radius).powi(2) / s2;
        let b = -0.5 * (rho + radius).powi(2) / s2;
        (a, b, log_sum_exp(&[a, b]))
    }
}

impl Energy for ToyDensity {
    fn input_shape(&self) -> &[usize] {
        &SHAPE
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        match (&self.kind, &self.mixture) {
            (_, Some(m)) => m.energy_at(x),
            (ToyKind::Ring { radius }, None) => {
                let rho = x[0].hypot(x[1]);
                let (_, _, lse) = self.ring_terms(*radius, rho);
                let log_norm = -0.5 * (2.0 * PI * self.sigma * self.sigma).ln();
                Ok(-(lse + log_norm - (2.0 * PI * rho).ln()))
            }
            _ => unreachable!("mixture energy is built with the mixture"),
        }
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        match (&self.kind, &self.mixture) {
            (_, Some(m)) => m.energy_grad_at(x, grad),
            (ToyKind::Ring { radius }, None) => {
                let rho = x[0].hypot(x[1]);
                let (a, b, lse) = self.ring_terms(*radius, rho);
                let s2 = self.sigma * self.sigma;
                let (wa, wb) = ((a - lse).exp(), (b - lse).exp());
                let du = (wa * (rho - radius) + wb * (rho + radius)) / s2 + 1.0 / rho;
                grad[0] = du * x[0] / rho;
                grad[1] = du * x[1] / rho;
                self.energy_at(x)
            }
            _ => unreachable!("mixture energy is built with the mixture"),
        }
    }
}

/// Exact i.i.d. samples as an `[n, 2]` batch.
pub fn sample_truth<R: Rng + ?Sized>(d: &ToyDensity, n: usize, rng: &mut R) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Precondition("sample count must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(2 * n);
    match &d.kind {
        ToyKind::Mixture { centers, weights } => {
            let pick = WeightedIndex::new(weights).map_err(|e| Error::Precondition(e.to_string()))?;
            for _ in 0..n {
                let c = centers[pick.sample(rng)];
                let (z0, z1): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                out.push(c[0] + d.sigma * z0);
                out.push(c[1] + d.sigma * z1);
            }
        }
        ToyKind::Ring { radius } => {
            for _ in 0..n {
                let angle = rng.random_range(0.0..2.0 * PI);
                let z: f64 = StandardNormal.sample(rng);
                let r = radius + d.sigma * z;
                out.push(r * angle.cos());
                out.push(r * angle.sin());
            }
        }
    }
    Tensor::new(vec![n, 2], out)
}

/// Axis-aligned rectangle `[lo[0], hi[0]] x [lo[1], hi[1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lo: [-1.0, -1.0],
            hi: [1.0, 1.0],
        }
    }
}

/// Cell masses of a density on a `G x G` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub bounds: Bounds,
    pub resolution: usize,
    /// Row-major masses, summing to 1.
    pub values: Vec<f64>,
}

impl GridDensity {
    fn from_weights(bounds: Bounds, g: usize, mut values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonFinite("grid mass"));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self {
            bounds,
            resolution: g,
            values,
        })
    }

    pub fn cell_size(&self) -> [f64; 2] {
        cell_size(&self.bounds, self.resolution)
    }

    /// Center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        cell_center(&self.bounds, self.resolution, ix, iy)
    }

    /// Cell containing `p`, if inside the bounds.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let h = self.cell_size();
        let fx = (p[0] - self.bounds.lo[0]) / h[0];
        let fy = (p[1] - self.bounds.lo[1]) / h[1];
        let g = self.resolution as f64;
        (fx >= 0.0 && fy >= 0.0 && fx < g && fy < g).then_some((fx as usize, fy as usize))
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    /// Cells whose mass is at least that of all eight neighbours and at
    /// least `min_fraction` of the largest cell mass.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<(usize, usize)> {
        let g = self.resolution;
        let floor = min_fraction * self.values.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        for iy in 0..g {
            for ix in 0..g {
                let v = self.at(ix, iy);
                if v <= 0.0 || v < floor {
                    continue;
                }
                let mut is_max = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (ix as i64 + dx, iy as i64 + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= g as i64 || ny >= g as i64 {
                            continue;
                        }
                        // Ties go to the cell scanned first, so a flat top yields one maximum.
                        let n = self.at(nx as usize, ny as usize);
                        let earlier = (ny, nx) < (iy as i64, ix as i64);
                        if n > v || (earlier && n == v) {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    /// Matrix of masses, one grid row per line, lowest row first.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.chunks(self.resolution) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn to_svg(&self, title: &str) -> String {
        plot::heatmap(title, &self.values, self.resolution, self.resolution)
    }
}

fn cell_size(b: &Bounds, g: usize) -> [f64; 2] {
    [(b.hi[0] - b.lo[0]) / g as f64, (b.hi[1] - b.lo[1]) / g as f64]
}

fn cell_center(b: &Bounds, g: usize, ix: usize, iy: usize) -> [f64; 2] {
    let h = cell_size(b, g);
    [b.lo[0] + (ix as f64 + 0.5) * h[0], b.lo[1] + (iy as f64 + 0.5) * h[1]]
}

fn check_grid(bounds: &Bounds, g: usize) -> Result<()> {
    if g == 0 || !(bounds.hi[0] > bounds.lo[0] && bounds.hi[1] > bounds.lo[1]) {
        return Err(Error::Precondition("grid needs positive resolution and extent".into()));
    }
    Ok(())
}

/// Normalizes `exp(-U)` over the grid: each cell gets mass proportional to
/// `exp(-U(center))`.
pub fn grid_normalize<E: Energy + ?Sized>(pot: &E, bounds: Bounds, g: usize) -> Result<GridDensity> {
    check_grid(&bounds, g)?;
    if pot.input_shape() != SHAPE {
        return Err(Error::dim("grid normalization", &SHAPE, pot.input_shape()));
    }
    let neg_u: Vec<f64> = (0..g * g)
        .into_par_iter()
        .map(|i| pot.energy_at(&cell_center(&bounds, g, i % g, i / g)).map(|u| -u))
        .collect::<Result<_>>()?;
    if neg_u.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("grid energy"));
    }
    let m = neg_u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NonFinite("grid energies (all exp(-U) underflow)"));
    }
    GridDensity::from_weights(bounds, g, neg_u.iter().map(|v| (v - m).exp()).collect())
}

/// Gaussian-kernel density estimate of `[n, 2]` points on the grid.
pub fn kde(points: &Tensor, bandwidth: f64, bounds: Bounds, g: usize) -> Result<GridDensity> {
    check_grid(&bounds, g)?;
    if points.shape().len() != 2 || points.shape()[1] != 2 {
        return Err(Error::dim("kde points", &[points.batch_len(), 2], points.shape()));
    }
    if points.batch_len() < 2 {
        return Err(Error::Precondition("kde needs at least two points".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Bandwidth(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let first = points.sample(0);
    if points.samples().all(|p| p == first) {
        return Err(Error::Bandwidth("all points coincide".into()));
    }
    let h = cell_size(&bounds, g);
    let reach = KDE_CUTOFF * bandwidth;
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let axis = |p: f64, k: usize| -> (usize, Vec<f64>) {
        let lo = (((p - reach - bounds.lo[k]) / h[k]).floor().max(0.0)) as usize;
        let hi = (((p + reach - bounds.lo[k]) / h[k]).ceil().min(g as f64)).max(0.0) as usize;
        let w = (lo.min(hi)..hi)
            .map(|i| {
                let c = bounds.lo[k] + (i as f64 + 0.5) * h[k];
                (-(c - p) * (c - p) * inv).exp()
            })
            .collect();
        (lo, w)
    };
    let partials: Vec<Vec<f64>> = points
        .data()
        .par_chunks(2 * KDE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; g * g];
            for p in chunk.chunks_exact(2) {
                let (x0, wx) = axis(p[0], 0);
                let (y0, wy) = axis(p[1], 1);
                for (j, wyj) in wy.iter().enumerate() {
                    let row = &mut acc[(y0 + j) * g + x0..(y0 + j) * g + x0 + wx.len()];
                    for (a, wxi) in row.iter_mut().zip(&wx) {
                        *a += wyj * wxi;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; g * g];
    for part in partials {
        for (t, v) in total.iter_mut().zip(&part) {
            *t += v;
        }
    }
    if total.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Precondition("no kernel mass falls inside the grid".into()));
    }
    GridDensity::from_weights(bounds, g, total)
}

/// `sum |a - b|` over cells; a value in `[0, 2]`.
pub fn grid_l1(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    if a.resolution != b.resolution || a.bounds != b.bounds {
        return Err(Error::dim("grid comparison", &[a.resolution, a.resolution], &[b.resolution, b.resolution]));
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::analytic::{Constant, Quadratic};
    use crate::rng;

    #[test]
    fn one_component_sample_mean() {
        let d = ToyDensity::mixture(vec![[0.0, 0.0]], vec![1.0], TOY_SIGMA).unwrap();
        let n = 20000;
        let s = sample_truth(&d, n, &mut rng::seeded(1)).unwrap();
        let tol = 4.0 * TOY_SIGMA / (n as f64).sqrt();
        for k in 0..2 {
            let m = s.samples().map(|p| p[k]).sum::<f64>() / n as f64;
            assert!(m.abs() < tol);
        }
    }

    #[test]
    fn ring_mean_radius() {
        // E|R + sigma Z| = R for R >> sigma up to a term below 1e-9.
        let d = ToyDensity::ring(1.0, TOY_SIGMA).unwrap();
        let s = sample_truth(&d, 100_000, &mut rng::seeded(2)).unwrap();
        let mean = s.samples().map(|p| p[0].hypot(p[1])).sum::<f64>() / 1e5;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = ToyDensity::three_modes();
        let a = sample_truth(&d, 50, &mut rng::seeded(3)).unwrap();
        let b = sample_truth(&d, 50, &mut rng::seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ring_density_integrates_to_one() {
        let d = ToyDensity::ring(0.5, TOY_SIGMA).unwrap();
        let b = Bounds { lo: [-1.5, -1.5], hi: [1.5, 1.5] };
        let g = 600;
        let h = cell_size(&b, g);
        let mut total = 0.0;
        for iy in 0..g {
            for ix in 0..g {
                total += (-d.energy_at(&cell_center(&b, g, ix, iy)).unwrap()).exp() * h[0] * h[1];
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn constant_energy_gives_uniform_grid() {
        let g = grid_normalize(&Constant::new(vec![2], 3.0), Bounds::default(), 20).unwrap();
        assert!(g.values.iter().all(|&v| (v - 1.0 / 400.0).abs() < 1e-15));
    }

    #[test]
    fn shift_invariance() {
        let q = Quadratic::new(vec![2], 0.3);
        let a = grid_normalize(&q, Bounds::default(), 50).unwrap();
        let b = grid_normalize(&q.clone().with_offset(123.0), Bounds::default(), 50).unwrap();
        assert!(grid_l1(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn gaussian_grid_matches_analytic_density() {
        let s = TOY_SIGMA;
        let g = 200;
        let grid = grid_normalize(&Quadratic::new(vec![2], s), Bounds::default(), g).unwrap();
        // Independent route: the bivariate normal density at each cell center.
        let mut oracle = Vec::with_capacity(g * g);
        for iy in 0..g {
            for ix in 0..g {
                let c = cell_center(&Bounds::default(), g, ix, iy);
                let q = (c[0] * c[0] + c[1] * c[1]) / (s * s);
                oracle.push((-0.5 * q).exp() / (2.0 * PI * s * s));
            }
        }
        let total: f64 = oracle.iter().sum();
        let worst = grid
            .values
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b / total).abs() / (b / total))
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn underflow_is_numeric_error() {
        let err = grid_normalize(&Constant::new(vec![2], f64::INFINITY), Bounds::default(), 10).unwrap_err();
        assert_eq!(err.class(), "numeric");
    }

    #[test]
    fn huge_energies_survive_max_subtraction() {
        let q = Quadratic::new(vec![2], 1e-3).with_center(vec![50.0, 50.0]);
        let g = grid_normalize(&q, Bounds::default(), 10).unwrap();
        assert_eq!(g.values[99], 1.0);
    }

    #[test]
    fn kde_single_cluster_peaks_at_center() {
        let d = ToyDensity::mixture(vec![[0.0, 0.0]], vec![1.0], 0.1).unwrap();
        let pts = sample_truth(&d, 5000, &mut rng::seeded(4)).unwrap();
        let k = kde(&pts, DEFAULT_BANDWIDTH, Bounds::default(), 20).unwrap();
        assert!((k.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let best = (0..400).max_by(|&i, &j| k.values[i].total_cmp(&k.values[j])).unwrap();
        assert!([9, 10].contains(&(best % 20)) && [9, 10].contains(&(best / 20)));
    }

    #[test]
    fn kde_matches_direct_sum() {
        let pts = Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.3, 0.05, 0.9, -0.9]).unwrap();
        let (b, g, bw) = (Bounds::default(), 16, 0.2);
        let k = kde(&pts, bw, b, g).unwrap();
        let mut direct = vec![0.0; g * g];
        for iy in 0..g {
            for ix in 0..g {
                let c = cell_center(&b, g, ix, iy);
                for p in pts.samples() {
                    let r2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                    direct[iy * g + ix] += (-r2 / (2.0 * bw * bw)).exp();
                }
            }
        }
        let total: f64 = direct.iter().sum();
        let err = k.values.iter().zip(&direct).map(|(a, d)| (a - d / total).abs()).sum::<f64>();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn kde_rejects_degenerate_input() {
        let same = Tensor::new(vec![3, 2], vec![0.5; 6]).unwrap();
        assert_eq!(kde(&same, 0.05, Bounds::default(), 10).unwrap_err().class(), "bandwidth");
        let pts = Tensor::new(vec![2, 2], vec![0.0, 0.0, 0.1, 0.1]).unwrap();
        assert_eq!(kde(&pts, 0.0, Bounds::default(), 10).unwrap_err().class(), "bandwidth");
    }

    #[test]
    fn l1_extremes() {
        let b = Bounds::default();
        let one_hot = |i: usize| {
            let mut v = vec![0.0; 4];
            v[i] = 1.0;
            GridDensity { bounds: b, resolution: 2, values: v }
        };
        assert_eq!(grid_l1(&one_hot(0), &one_hot(0)).unwrap(), 0.0);
        assert_eq!(grid_l1(&one_hot(0), &one_hot(3)).unwrap(), 2.0);
        let other = GridDensity { bounds: b, resolution: 1, values: vec![1.0] };
        assert_eq!(grid_l1(&one_hot(0), &other).unwrap_err().class(), "dimension");
    }

    #[test]
    fn local_maxima_of_mixture_grid() {
        let d = ToyDensity::three_modes();
        let grid = grid_normalize(&d, Bounds::default(), 100).unwrap();
        let maxima = grid.local_maxima(0.05);
        assert_eq!(maxima.len(), 3);
        for m in d.modes() {
            let (ix, iy) = grid.cell_of(m).unwrap();
            assert!(maxima.iter().any(|&(x, y)| x.abs_diff(ix) <= 1 && y.abs_diff(iy) <= 1));
        }
    }
}
