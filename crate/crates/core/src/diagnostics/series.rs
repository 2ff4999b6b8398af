use std::ops::Range;

use crate::error::{Error, Result};

pub const DEFAULT_MAXLAG: usize = 20;

/// Correlation summary of a logged series, optionally against a second one.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub maxlag: usize,
    /// Lags `0..=maxlag`.
    pub acf: Vec<f64>,
    /// Lags `0..=maxlag`; entry 0 is 1 by convention.
    pub pacf: Vec<f64>,
    /// Lags `-maxlag..=maxlag`, empty without a second series.
    pub ccf: Vec<f64>,
}

impl SeriesStats {
    /// Cross-correlation at `lag`.
    pub fn ccf_at(&self, lag: i64) -> Option<f64> {
        let i = lag + self.maxlag as i64;
        (i >= 0).then(|| self.ccf.get(i as usize).copied()).flatten()
    }
}

/// Index range of the analysis window: the run with the first 20% dropped.
pub fn analysis_window(len: usize) -> Range<usize> {
    len / 5..len
}

fn check_len(len: usize, maxlag: usize) -> Result<()> {
    if len <= maxlag + 1 {
        return Err(Error::Precondition(format!(
            "series of length {len} is too short for maxlag {maxlag}"
        )));
    }
    Ok(())
}

fn prepared(x: &[f64], centered: bool) -> Result<Vec<f64>> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    let shift = if centered { mean } else { 0.0 };
    Ok(x.iter().map(|v| v - shift).collect())
}

/// Sample autocorrelation at lags `0..=maxlag`,
/// `r_k = sum_t y_t y_{t+k} / sum_t y_t^2` with `y` the (optionally
/// mean-removed) series.
pub fn acf(x: &[f64], maxlag: usize, centered: bool) -> Result<Vec<f64>> {
    check_len(x.len(), maxlag)?;
    let y = prepared(x, centered)?;
    let c0: f64 = y.iter().map(|v| v * v).sum();
    Ok((0..=maxlag)
        .map(|k| y.iter().zip(&y[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Partial autocorrelation at lags `0..=maxlag` by the Durbin-Levinson
/// recursion on the sample autocorrelations.
pub fn pacf(x: &[f64], maxlag: usize, centered: bool) -> Result<Vec<f64>> {
    let r = acf(x, maxlag, centered)?;
    Ok(durbin_levinson(&r))
}

pub(crate) fn durbin_levinson(r: &[f64]) -> Vec<f64> {
    let maxlag = r.len() - 1;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=maxlag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let kk = if den.abs() < 1e-300 { 0.0 } else { num / den };
        let mut next = Vec::with_capacity(k);
        for j in 1..k {
            next.push(phi[j - 1] - kk * phi[k - j - 1]);
        }
        next.push(kk);
        phi = next;
        out.push(kk);
    }
    out
}

/// Normalized cross-correlation `c_k = sum_t a_t b_{t+k} / sqrt(sum a^2 sum b^2)`
/// at lags `-maxlag..=maxlag`, with independent centering of each series.
pub fn cross_correlation(
    a: &[f64],
    b: &[f64],
    maxlag: usize,
    center_a: bool,
    center_b: bool,
) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::dim("cross-correlation", &[a.len()], &[b.len()]));
    }
    check_len(a.len(), maxlag)?;
    let ya = prepared(a, center_a)?;
    let yb = prepared(b, center_b)?;
    let norm = (ya.iter().map(|v| v * v).sum::<f64>() * yb.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let m = maxlag as i64;
    Ok((-m..=m)
        .map(|k| {
            let s: f64 = if k >= 0 {
                ya.iter().zip(&yb[k as usize..]).map(|(x, y)| x * y).sum()
            } else {
                ya[(-k) as usize..].iter().zip(&yb).map(|(x, y)| x * y).sum()
            };
            s / norm
        })
        .collect())
}

/// Cross-correlation of the energy-gap series `d` (uncentered) with the
/// gradient-magnitude series `v` (mean-centered).
pub fn ccf(d: &[f64], v: &[f64], maxlag: usize) -> Result<Vec<f64>> {
    cross_correlation(d, v, maxlag, false, true)
}

/// ACF and PACF of `a` with the given centering, plus its CCF against `b`
/// when given (`a` taken uncentered, `b` mean-centered).
pub fn series_stats(a: &[f64], centered: bool, b: Option<&[f64]>, maxlag: usize) -> Result<SeriesStats> {
    let acf = acf(a, maxlag, centered)?;
    let pacf = durbin_levinson(&acf);
    let ccf = match b {
        Some(b) => ccf(a, b, maxlag)?,
        None => Vec::new(),
    };
    Ok(SeriesStats { maxlag, acf, pacf, ccf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn lag_zero_is_one() {
        let x = gaussian(50, 1);
        for c in [true, false] {
            assert!((acf(&x, 5, c).unwrap()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_is_undefined() {
        let err = acf(&[2.0; 10], 3, true).unwrap_err();
        assert_eq!(err.class(), "undefined-correlation");
        assert_eq!(acf(&[1.0, 2.0], 3, true).unwrap_err().class(), "precondition");
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let n = 4000;
        let x = gaussian(n, 2);
        let r = acf(&x, 10, true).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(r[1..].iter().all(|v| v.abs() < bound), "{r:?}");
    }

    #[test]
    fn ar1_partial_autocorrelation() {
        let z = gaussian(20000, 3);
        let mut x = vec![0.0; z.len()];
        for t in 1..z.len() {
            x[t] = 0.5 * x[t - 1] + z[t];
        }
        let p = pacf(&x, 6, true).unwrap();
        assert!((p[1] - 0.5).abs() < 0.03, "{p:?}");
        assert!(p[2..].iter().all(|v| v.abs() < 0.03), "{p:?}");
    }

    #[test]
    fn durbin_levinson_inverts_ar2() {
        // AR(2) with phi = (0.5, 0.2): r1 = phi1 / (1 - phi2), r2 = phi1 r1 + phi2.
        let r1 = 0.5 / 0.8;
        let r2 = 0.5 * r1 + 0.2;
        let r3 = 0.5 * r2 + 0.2 * r1;
        let p = durbin_levinson(&[1.0, r1, r2, r3]);
        assert!((p[2] - 0.2).abs() < 1e-12);
        assert!(p[3].abs() < 1e-12);
    }

    #[test]
    fn cross_correlation_of_shifted_series() {
        let x = gaussian(500, 4);
        // b_t = a_{t-2}: peak at lag +2.
        let mut b = vec![0.0; 500];
        b[2..].copy_from_slice(&x[..498]);
        let c = cross_correlation(&x, &b, 4, true, true).unwrap();
        let best = (0..c.len()).max_by(|&i, &j| c[i].total_cmp(&c[j])).unwrap();
        assert_eq!(best as i64 - 4, 2);
        assert!(c.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }
}
