//! Small numeric helpers shared by the analysis modules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Divisor convention for a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SdConvention {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Two-pass standard deviation. `None` when there are too few values for the
/// convention (0 for population, fewer than 2 for sample).
pub fn std_dev(values: &[f64], convention: SdConvention) -> Option<f64> {
    let n = values.len();
    let denom = match convention {
        SdConvention::Population if n >= 1 => n as f64,
        SdConvention::Sample if n >= 2 => (n - 1) as f64,
        _ => return None,
    };
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / denom).sqrt())
}

/// Median of an already sorted slice (mean of the two middle values for even
/// lengths).
pub fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Zero-based index of the nearest-rank percentile `q` (in (0, 1]) over `n`
/// sorted values: rank = ceil(q * n), clamped to [1, n].
pub fn nearest_rank_index(q: f64, n: usize) -> usize {
    debug_assert!(n > 0);
    // Absorb float noise in q * n before taking the ceiling.
    let rank = (q * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

pub fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    Some(sorted[nearest_rank_index(q, sorted.len())])
}

/// Pearson correlation of two integer count vectors using exact integer
/// sums; only the final square root and division are in floating point.
/// `None` when either vector has zero variance or fewer than two entries.
pub fn pearson_counts(a: &[u32], b: &[u32]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as i128;
    if n < 2 {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (i128::from(x), i128::from(y));
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let cov = n * sab - sa * sb;
    let va = n * saa - sa * sa;
    let vb = n * sbb - sb * sb;
    if va == 0 || vb == 0 {
        return None;
    }
    if cov * cov == va * vb {
        return Some(if cov > 0 { 1.0 } else { -1.0 });
    }
    let r = cov as f64 / ((va as f64).sqrt() * (vb as f64).sqrt());
    Some(r.clamp(-1.0, 1.0))
}

/// Pearson correlation of two real vectors (two-pass). `None` on zero
/// variance or fewer than two entries.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    let n = Normal::standard();
    n.sf(z)
}

/// Two-sided normal p-value.
pub fn normal_two_sided(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

/// Chi-squared survival function (regularized upper incomplete gamma at
/// df/2, x/2).
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df > 0");
    dist.sf(x)
}

/// Two-sided Student-t p-value.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Round half away from zero to `decimals` places, for presentation.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}
