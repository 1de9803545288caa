//! Photon-number distributions, binomial thinning through lossy elements,
//! and log-domain combinatorics that stay accurate for photon numbers up to
//! 10^10.
//!
//! Every probability that passes through a binomial coefficient is formed in
//! the natural-log domain and only exponentiated at the end. Anything below
//! `e^-700` becomes an exact zero.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_probability, Error, Result};

/// Log-probabilities below this are flushed to exact zero.
pub const LN_UNDERFLOW: f64 = -700.0;

/// Smallest mean for which the Gaussian approximation of a Poisson source is accepted.
pub const GAUSSIAN_MIN_MEAN: f64 = 1e3;

/// Largest dense support a thinned distribution may occupy.
const MAX_DENSE_SUPPORT: u64 = 20_000_000;

/// A probability held as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a log-probability; tiny positive rounding excess is clamped to 0.
    pub fn new(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln > 1e-12 {
            return Err(Error::domain(format!("log-probability {ln} exceeds 0")));
        }
        Ok(LogProb(ln.min(0.0)))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        if self.0 < LN_UNDERFLOW {
            0.0
        } else {
            self.0.exp()
        }
    }

    pub fn mul(self, other: LogProb) -> LogProb {
        LogProb(self.0 + other.0)
    }
}

/// Exponentiates a log-domain value with the underflow flush applied.
pub fn exp_flushed(ln: f64) -> f64 {
    if ln < LN_UNDERFLOW {
        0.0
    } else {
        ln.exp()
    }
}

/// Tail of the Stirling series for `ln Γ(x+1)`, accurate for `x ≥ 30`.
fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln Γ(b+k+1) − ln Γ(b+1)` without cancelling two huge log-gammas. Needs `b ≥ 30`.
fn ln_rising_factorial_ratio(b: f64, k: f64) -> f64 {
    (b + 0.5) * (k / b).ln_1p() + k * (b + k).ln() - k + stirling_tail(b + k) - stirling_tail(b)
}

/// `ln C(n, r)`.
pub fn log_binomial_coefficient(n: u64, r: u64) -> Result<f64> {
    if r > n {
        return Err(Error::domain(format!("binomial coefficient C({n}, {r}) needs r <= n")));
    }
    let k = r.min(n - r);
    if k == 0 {
        return Ok(0.0);
    }
    if k <= 30 {
        let nf = n as f64;
        let mut acc = 0.0;
        for i in 0..k {
            let i = i as f64;
            acc += ((nf - i) / (i + 1.0)).ln();
        }
        return Ok(acc);
    }
    let kf = k as f64;
    let b = (n - k) as f64;
    Ok(ln_rising_factorial_ratio(b, kf) - ln_gamma(kf + 1.0))
}

/// Log of `C(m,n) t^n (1−t)^(m−n)`; `-inf` when `n > m`.
pub fn ln_binomial_thinning_pmf(m: u64, t: f64, n: u64) -> Result<f64> {
    check_probability("transmittance", t)?;
    if n > m {
        return Ok(f64::NEG_INFINITY);
    }
    if t == 0.0 {
        return Ok(if n == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if t == 1.0 {
        return Ok(if n == m { 0.0 } else { f64::NEG_INFINITY });
    }
    let rest = m - n;
    if n < 30 || rest < 30 {
        let lc = log_binomial_coefficient(m, n)?;
        return Ok(lc + n as f64 * t.ln() + rest as f64 * (-t).ln_1p());
    }
    // Saddle-point form: no term grows with m near the mode.
    let (mf, nf, rf) = (m as f64, n as f64, rest as f64);
    let lc = stirling_tail(mf) - stirling_tail(nf) - stirling_tail(rf);
    let dev = deviance(nf, mf * t) + deviance(rf, mf * (1.0 - t));
    Ok(lc - dev + 0.5 * (mf / (2.0 * std::f64::consts::PI * nf * rf)).ln())
}

/// `x ln(x/np) + np − x`, evaluated by series when `x ≈ np`.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return s;
            }
            s = next;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Probability that `n` of `m` photons survive an element of transmittance `t`.
pub fn binomial_thinning_pmf(m: u64, t: f64, n: u64) -> Result<f64> {
    Ok(exp_flushed(ln_binomial_thinning_pmf(m, t, n)?))
}

/// Standard normal lower tail `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 − Φ(z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Mass of `N(mean, variance)` inside `[lo, hi]`, clamped to `[0, 1]`; 0 for `lo ≥ hi`.
pub fn gaussian_window_mass(mean: f64, variance: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::domain(format!("variance {variance} must be positive")));
    }
    if !(lo < hi) {
        return Ok(0.0);
    }
    let sd = variance.sqrt();
    let zl = (lo - mean) / sd;
    let zh = (hi - mean) / sd;
    let mass = if zl >= 0.0 {
        normal_sf(zl) - normal_sf(zh)
    } else if zh <= 0.0 {
        normal_cdf(zh) - normal_cdf(zl)
    } else {
        1.0 - normal_cdf(zl) - normal_sf(zh)
    };
    Ok(mass.clamp(0.0, 1.0))
}

/// Mass of `N(mean, variance)` outside `[lo, hi]`, computed from the tails directly so
/// that tiny values keep full relative precision.
pub fn gaussian_window_complement(mean: f64, variance: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::domain(format!("variance {variance} must be positive")));
    }
    if !(lo < hi) {
        return Ok(1.0);
    }
    let sd = variance.sqrt();
    let zl = (lo - mean) / sd;
    let zh = (hi - mean) / sd;
    if zl < 0.0 && zh > 0.0 {
        Ok((normal_cdf(zl) + normal_sf(zh)).clamp(0.0, 1.0))
    } else {
        Ok(1.0 - gaussian_window_mass(mean, variance, lo, hi)?)
    }
}

/// Photon-number histogram: `(bin start, weight)` pairs on a common bin width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: u64,
    pub bins: Vec<(u64, f64)>,
}

impl Histogram {
    /// Default bin width for a histogram centred near `mean` photons.
    pub fn default_bin_width(mean: f64) -> u64 {
        if mean <= 1e4 {
            1
        } else {
            ((mean / 1e6).round() as u64).max(1)
        }
    }

    /// Bins non-negative real-valued photon counts.
    pub fn from_samples(samples: &[f64], bin_width: u64) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::domain("histogram bin width must be at least 1"));
        }
        let mut map = std::collections::BTreeMap::new();
        for &s in samples {
            if !(s >= 0.0) {
                return Err(Error::domain(format!("photon count {s} is negative")));
            }
            let start = (s.floor() as u64 / bin_width) * bin_width;
            *map.entry(start).or_insert(0.0) += 1.0;
        }
        Ok(Histogram { bin_width, bins: map.into_iter().collect() })
    }

    fn total(&self) -> f64 {
        self.bins.iter().map(|b| b.1).sum()
    }
}

/// Distribution of photons per pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhotonNumberDistribution {
    Poisson {
        mean: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Weight `weight_low` on `low` photons, the rest on `high`.
    DualDelta {
        low: u64,
        high: u64,
        weight_low: f64,
    },
    Empirical(Histogram),
}

impl PhotonNumberDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Poisson { mean } => {
                if !(*mean >= 0.0 && mean.is_finite()) {
                    return Err(Error::domain(format!("Poisson mean {mean} must be finite and >= 0")));
                }
            }
            Self::Gaussian { mean, variance } => {
                if !(*mean >= GAUSSIAN_MIN_MEAN) {
                    return Err(Error::domain(format!(
                        "Gaussian approximation needs mean >= {GAUSSIAN_MIN_MEAN}, got {mean}"
                    )));
                }
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(Error::domain(format!("Gaussian variance {variance} must be positive")));
                }
            }
            Self::DualDelta { weight_low, .. } => check_probability("dual-delta weight", *weight_low)?,
            Self::Empirical(h) => {
                if h.bin_width == 0 {
                    return Err(Error::domain("histogram bin width must be at least 1"));
                }
                if h.bins.iter().any(|b| !(b.1 >= 0.0)) {
                    return Err(Error::domain("histogram weights must be non-negative"));
                }
                if !(h.total() > 0.0) {
                    return Err(Error::domain("histogram is empty"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Poisson { mean } | Self::Gaussian { mean, .. } => *mean,
            Self::DualDelta { low, high, weight_low } => weight_low * *low as f64 + (1.0 - weight_low) * *high as f64,
            Self::Empirical(h) => {
                let half = (h.bin_width as f64 - 1.0) / 2.0;
                h.bins.iter().map(|(s, w)| (*s as f64 + half) * w).sum::<f64>() / h.total()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Poisson { mean } => *mean,
            Self::Gaussian { variance, .. } => *variance,
            _ => {
                let mu = self.mean();
                let (lo, hi) = self.support();
                (lo..=hi).map(|n| self.pmf(n) * (n as f64 - mu).powi(2)).sum()
            }
        }
    }

    /// Inclusive photon-number range outside which the mass is negligible (< 1e-30).
    pub fn support(&self) -> (u64, u64) {
        match self {
            Self::Poisson { mean } => {
                let sd = mean.sqrt();
                let lo = (mean - 12.0 * sd - 12.0).floor().max(0.0) as u64;
                let hi = (mean + 12.0 * sd + 40.0).ceil() as u64;
                (lo, hi)
            }
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let lo = (mean - 12.0 * sd).floor().max(0.0) as u64;
                let hi = (mean + 12.0 * sd).ceil().max(0.0) as u64;
                (lo, hi)
            }
            Self::DualDelta { low, high, .. } => (*low.min(high), *low.max(high)),
            Self::Empirical(h) => {
                let lo = h.bins.iter().map(|b| b.0).min().unwrap_or(0);
                let hi = h.bins.iter().map(|b| b.0 + h.bin_width - 1).max().unwrap_or(0);
                (lo, hi)
            }
        }
    }

    /// Probability of exactly `n` photons. The Gaussian kind is integrated over the unit bin
    /// `[n − ½, n + ½]`; histogram bins spread their weight uniformly.
    pub fn pmf(&self, n: u64) -> f64 {
        match self {
            Self::Poisson { mean } => {
                if *mean == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                let nf = n as f64;
                exp_flushed(nf * mean.ln() - mean - ln_gamma(nf + 1.0))
            }
            Self::Gaussian { mean, variance } => {
                let nf = n as f64;
                gaussian_window_mass(*mean, *variance, nf - 0.5, nf + 0.5).unwrap_or(0.0)
            }
            Self::DualDelta { low, high, weight_low } => {
                let mut p = 0.0;
                if n == *low {
                    p += weight_low;
                }
                if n == *high {
                    p += 1.0 - weight_low;
                }
                p
            }
            Self::Empirical(h) => {
                let start = (n / h.bin_width) * h.bin_width;
                match h.bins.binary_search_by_key(&start, |b| b.0) {
                    Ok(i) => h.bins[i].1 / h.total() / h.bin_width as f64,
                    Err(_) => {
                        h.bins.iter().filter(|b| b.0 == start).map(|b| b.1).sum::<f64>()
                            / h.total()
                            / h.bin_width as f64
                    }
                }
            }
        }
    }

    /// Mass of photon numbers in the real interval `[lo, hi]`. The Gaussian kind is
    /// treated as continuous.
    pub fn window_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(lo <= hi) {
            return 0.0;
        }
        match self {
            Self::Gaussian { mean, variance } => gaussian_window_mass(*mean, *variance, lo, hi).unwrap_or(0.0),
            _ => {
                let (slo, shi) = self.support();
                let a = lo.ceil().max(slo as f64);
                let b = hi.floor().min(shi as f64);
                if a > b {
                    return 0.0;
                }
                (a as u64..=b as u64).map(|n| self.pmf(n)).sum::<f64>().min(1.0)
            }
        }
    }

    /// Distribution after every photon independently survives with probability `t`.
    pub fn thin(&self, t: f64) -> Result<Self> {
        self.validate()?;
        check_probability("transmittance", t)?;
        if t == 1.0 {
            return Ok(self.clone());
        }
        match self {
            Self::Poisson { mean } => return Ok(Self::Poisson { mean: mean * t }),
            Self::Gaussian { mean, variance } => {
                let (lo, hi) = self.support();
                if hi - lo > 100_000 {
                    // Dense compounding is out of reach; keep the first two moments.
                    let m = mean * t;
                    let v = t * t * variance + t * (1.0 - t) * mean;
                    if m >= GAUSSIAN_MIN_MEAN {
                        return Ok(Self::Gaussian { mean: m, variance: v });
                    }
                }
            }
            _ => {}
        }
        let (lo, hi) = self.support();
        let out_hi = binomial_support(hi, t).1;
        if out_hi > MAX_DENSE_SUPPORT {
            return Err(Error::domain(format!("thinned support up to {out_hi} photons is too large")));
        }
        let mut out = vec![0.0f64; out_hi as usize + 1];
        for m in lo..=hi {
            let pm = self.pmf(m);
            if pm == 0.0 {
                continue;
            }
            let (nlo, nhi) = binomial_support(m, t);
            for n in nlo..=nhi.min(out_hi) {
                out[n as usize] += pm * binomial_thinning_pmf(m, t, n)?;
            }
        }
        let bins = out.into_iter().enumerate().filter(|(_, p)| *p > 0.0).map(|(n, p)| (n as u64, p)).collect();
        Ok(Self::Empirical(Histogram { bin_width: 1, bins }))
    }
}

/// Range of `Binomial(m, t)` outcomes carrying all but ~1e-30 of the mass.
fn binomial_support(m: u64, t: f64) -> (u64, u64) {
    let mean = m as f64 * t;
    let sd = (mean * (1.0 - t)).sqrt();
    let lo = (mean - 13.0 * sd - 15.0).floor().max(0.0) as u64;
    let hi = ((mean + 13.0 * sd + 15.0).ceil() as u64).min(m);
    (lo, hi)
}

/// Total-variation distance between two distributions over their joint support.
pub fn total_variation(a: &PhotonNumberDistribution, b: &PhotonNumberDistribution) -> f64 {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    let lo = alo.min(blo);
    let hi = ahi.max(bhi);
    0.5 * (lo..=hi).map(|n| (a.pmf(n) - b.pmf(n)).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomial_coefficients() {
        assert!((log_binomial_coefficient(4, 2).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert_eq!(log_binomial_coefficient(1_000_000, 0).unwrap(), 0.0);
        assert_eq!(log_binomial_coefficient(17, 17).unwrap(), 0.0);
        assert!(log_binomial_coefficient(3, 4).is_err());
    }

    #[test]
    fn large_binomial_coefficient_matches_exact_product() {
        // C(10^6, 2) = 10^6 (10^6 − 1) / 2
        let exact = (1e6f64 * 999_999.0 / 2.0).ln();
        let got = log_binomial_coefficient(1_000_000, 2).unwrap();
        assert!((got - exact).abs() / exact < 1e-14);
    }

    #[test]
    fn thinning_pmf_examples() {
        assert!((binomial_thinning_pmf(10, 0.1, 1).unwrap() - 0.387420489).abs() < 1e-9);
        assert_eq!(binomial_thinning_pmf(5, 0.3, 6).unwrap(), 0.0);
        assert_eq!(binomial_thinning_pmf(5, 1.0, 5).unwrap(), 1.0);
        assert!(binomial_thinning_pmf(5, 1.2, 1).is_err());
    }

    #[test]
    fn gaussian_window_examples() {
        let half = gaussian_window_mass(0.0, 1.0, -40.0, 0.0).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        let one_sigma = gaussian_window_mass(1e6, 1e6, 1e6 - 1e3, 1e6 + 1e3).unwrap();
        assert!((one_sigma - 0.682689492137).abs() < 1e-9);
        assert_eq!(gaussian_window_mass(20.0, 20.0, 20.0, 20.0).unwrap(), 0.0);
        assert!(gaussian_window_mass(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn complement_keeps_relative_precision_deep_in_tails() {
        let c = gaussian_window_complement(0.0, 1.0, -10.0, 10.0).unwrap();
        let exact = 1.523970604832105e-23;
        assert!((c - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn dual_delta_thinned_vacuum() {
        let d = PhotonNumberDistribution::DualDelta { low: 4, high: 8, weight_low: 0.5 };
        let t = d.thin(0.5).unwrap();
        assert!((t.pmf(0) - 0.033203125).abs() < 1e-15, "{}", t.pmf(0));
        let total: f64 = (0..=8).map(|n| t.pmf(n)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_prob_flushes_underflow() {
        assert_eq!(LogProb::new(-800.0).unwrap().exp(), 0.0);
        assert!(LogProb::new(0.5).is_err());
        assert_eq!(LogProb::new(1e-13).unwrap().exp(), 1.0);
    }

    #[test]
    fn histogram_bin_width_default() {
        assert_eq!(Histogram::default_bin_width(5e3), 1);
        assert_eq!(Histogram::default_bin_width(5.1e6), 5);
        let h = Histogram::from_samples(&[3.2, 3.9, 7.0], 1).unwrap();
        assert_eq!(h.bins, vec![(3, 2.0), (7, 1.0)]);
    }
}
