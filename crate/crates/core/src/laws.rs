//! Limit laws of the rescaled stopping times and block counts, and
//! Kolmogorov-Smirnov statistics against them.
//!
//! | law                       | CDF                            | describes                 |
//! |---------------------------|--------------------------------|---------------------------|
//! | `Beta(2c1, 1)`            | `x^(2c1)` on `[0, 1]`          | `N(gamma_n) / n`          |
//! | `GammaLaw(c1)`            | `1 - (2 / (2 + x))^(2c1)`      | `n gamma_n`               |
//! | `Frechet(1, 4 c1 c2)`     | `exp(-4 c1 c2 / x)`            | `N(theta_n) / ln n`       |
//! | `Exponential(2 c1 c2)`    | `1 - exp(-2 c1 c2 x)`          | `theta_n ln n`            |

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::integrate_half_line;
use crate::quadrature::integrate_unit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitLaw {
    /// `Beta(2 c1, 1)`.
    Beta { c1: f64 },
    /// Law of `2 (1 - Y) / Y` with `Y ~ Beta(2 c1, 1)`.
    GammaLaw { c1: f64 },
    /// Shape 1, no location.
    Frechet { scale: f64 },
    Exponential { rate: f64 },
}

impl LimitLaw {
    pub fn beta(c1: f64) -> Self {
        LimitLaw::Beta { c1 }
    }

    pub fn gamma(c1: f64) -> Self {
        LimitLaw::GammaLaw { c1 }
    }

    /// Fréchet law with scale `4 c1 c2`.
    pub fn frechet(c1: f64, c2: f64) -> Self {
        LimitLaw::Frechet {
            scale: 4.0 * c1 * c2,
        }
    }

    /// Exponential law with rate `2 c1 c2`.
    pub fn exponential(c1: f64, c2: f64) -> Self {
        LimitLaw::Exponential {
            rate: 2.0 * c1 * c2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LimitLaw::Beta { .. } => "beta",
            LimitLaw::GammaLaw { .. } => "gamma-law",
            LimitLaw::Frechet { .. } => "frechet",
            LimitLaw::Exponential { .. } => "exponential",
        }
    }

    /// Support as a closed interval.
    pub fn support(&self) -> (f64, f64) {
        match self {
            LimitLaw::Beta { .. } => (0.0, 1.0),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            LimitLaw::Beta { c1 } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    x.powf(2.0 * c1)
                }
            }
            LimitLaw::GammaLaw { c1 } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(2.0 * c1 * (2.0 / (2.0 + x)).ln()).exp_m1()
                }
            }
            LimitLaw::Frechet { scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (-scale / x).exp()
                }
            }
            LimitLaw::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            LimitLaw::Beta { c1 } => {
                if x <= 0.0 || x > 1.0 {
                    0.0
                } else {
                    2.0 * c1 * x.powf(2.0 * c1 - 1.0)
                }
            }
            LimitLaw::GammaLaw { c1 } => {
                if x < 0.0 {
                    0.0
                } else {
                    c1 * (2.0 / (2.0 + x)).powf(2.0 * c1 + 1.0)
                }
            }
            LimitLaw::Frechet { scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (scale.ln() - 2.0 * x.ln() - scale / x).exp()
                }
            }
            LimitLaw::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    /// Exact inverse of [`LimitLaw::cdf`] on `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() {
            return f64::NAN;
        }
        let (lo, hi) = self.support();
        if p <= 0.0 {
            return lo;
        }
        if p >= 1.0 {
            return hi;
        }
        match *self {
            LimitLaw::Beta { c1 } => p.powf(1.0 / (2.0 * c1)),
            LimitLaw::GammaLaw { c1 } => {
                // (2 / (2 + x))^(2c1) = 1 - p
                2.0 * (-(-p).ln_1p() / (2.0 * c1)).exp_m1()
            }
            LimitLaw::Frechet { scale } => -scale / p.ln(),
            LimitLaw::Exponential { rate } => -(-p).ln_1p() / rate,
        }
    }

    /// Inverse-transform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u);
            }
        }
    }

    /// `int g(x) f(x) dx` by tanh-sinh quadrature over the support.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        const TOL: f64 = 1e-13;
        match self {
            LimitLaw::Beta { .. } => integrate_unit(|t, _| g(t) * self.pdf(t), TOL),
            _ => integrate_half_line(|x| g(x) * self.pdf(x), TOL),
        }
    }
}

/// Draw of the `GammaLaw(c1)` limit through its Beta representation
/// `2 (1 - Y) / Y`, independent of the direct quantile route.
pub fn sample_gamma_via_beta<R: Rng + ?Sized>(c1: f64, rng: &mut R) -> f64 {
    let y = LimitLaw::beta(c1).sample(rng);
    2.0 * (1.0 - y) / y
}

/// `sup_x |F_emp(x) - F(x)|`, evaluated on both sides of every sample point.
pub fn ks_distance(samples: &[f64], law: &LimitLaw) -> Result<f64, LawError> {
    ks_distance_by(samples, |x| law.cdf(x))
}

pub fn ks_distance_by<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64, LawError> {
    if samples.is_empty() {
        return Err(LawError::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(LawError::NonFinite);
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, LawError> {
    if a.is_empty() || b.is_empty() {
        return Err(LawError::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic p-value of a two-sample statistic `d` (Kolmogorov series with
/// the usual small-sample correction).
pub fn ks_two_sample_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * f64::from(j * j) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;

    fn all_laws() -> Vec<LimitLaw> {
        vec![
            LimitLaw::beta(0.5),
            LimitLaw::beta(0.3),
            LimitLaw::beta(2.0),
            LimitLaw::gamma(0.5),
            LimitLaw::gamma(1.0),
            LimitLaw::gamma(2.0),
            LimitLaw::frechet(1.0, 1.0),
            LimitLaw::frechet(0.5, 2.0),
            LimitLaw::exponential(1.0, 1.0),
            LimitLaw::exponential(2.0, 0.3),
        ]
    }

    #[test]
    fn reference_values() {
        let f = LimitLaw::frechet(1.0, 1.0);
        assert!((f.cdf(4.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((f.cdf(4.0) - 0.367879).abs() < 1e-6);
        for c1 in [0.3, 1.0, 2.5] {
            let g = LimitLaw::gamma(c1);
            assert_eq!(g.cdf(0.0), 0.0);
            assert!((g.pdf(0.0) - c1).abs() < 1e-15);
        }
        assert!((LimitLaw::beta(0.5).cdf(0.25) - 0.25).abs() < 1e-15);
        assert_eq!(LimitLaw::exponential(1.0, 1.0).cdf(-3.0), 0.0);
        assert_eq!(LimitLaw::beta(1.0).cdf(7.0), 1.0);
        assert_eq!(LimitLaw::frechet(1.0, 1.0).cdf(0.0), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for law in all_laws() {
            // beyond 1 - 1e-5 the CDF itself no longer resolves x to 1e-10
            let lo = law.quantile(1e-9);
            let top = law.quantile(1.0 - 1e-5);
            for k in 0..=400 {
                let x = lo + (top - lo) * f64::from(k) / 400.0;
                let back = law.quantile(law.cdf(x));
                assert!(
                    (back - x).abs() <= 1e-10 * x.max(1.0),
                    "{law:?} x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn cdf_is_monotone_with_limits() {
        for law in all_laws() {
            let mut prev = 0.0;
            for k in -10..2000 {
                let x = f64::from(k) * 0.05;
                let f = law.cdf(x);
                assert!((0.0..=1.0).contains(&f) && f >= prev);
                prev = f;
            }
            assert_eq!(law.cdf(f64::NEG_INFINITY), 0.0);
            assert!((law.cdf(1e300) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for law in all_laws() {
            let total = law.expect(|_| 1.0);
            assert!((total - 1.0).abs() < 1e-8, "{law:?} {total}");
        }
    }

    #[test]
    fn gamma_moments_by_quadrature() {
        use crate::exact::gamma_law_moments;
        for c1 in [0.75, 1.5, 2.0] {
            let law = LimitLaw::gamma(c1);
            let (mean, var) = gamma_law_moments(c1);
            let m = law.expect(|x| x);
            assert!((m - mean.unwrap()).abs() < 1e-6, "{c1} {m}");
            if let Some(v) = var {
                let second = law.expect(|x| x * x);
                assert!((second - m * m - v).abs() < 1e-6, "{c1}");
            }
        }
    }

    #[test]
    fn ks_edge_cases() {
        let law = LimitLaw::exponential(1.0, 1.0);
        let median = law.quantile(0.5);
        assert!((ks_distance(&[median], &law).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ks_distance(&[], &law), Err(LawError::EmptySample));
        assert_eq!(ks_distance(&[f64::NAN], &law), Err(LawError::NonFinite));
    }

    #[test]
    fn self_samples_pass_ks() {
        for (r, law) in all_laws().into_iter().enumerate() {
            let mut rng = RngSpec::new(2024, r as u64).rng();
            let xs: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
            let d = ks_distance(&xs, &law).unwrap();
            assert!(d <= 0.01, "{law:?} {d}");
        }
    }

    #[test]
    fn gamma_law_two_routes_agree() {
        for c1 in [0.5, 1.0, 2.0] {
            let law = LimitLaw::gamma(c1);
            let mut r1 = RngSpec::new(5, 0).rng();
            let mut r2 = RngSpec::new(6, 0).rng();
            let direct: Vec<f64> = (0..50_000).map(|_| law.sample(&mut r1)).collect();
            let via: Vec<f64> = (0..50_000).map(|_| sample_gamma_via_beta(c1, &mut r2)).collect();
            let d = ks_two_sample(&direct, &via).unwrap();
            assert!(ks_two_sample_pvalue(d, direct.len(), via.len()) > 0.01, "{c1} {d}");
            assert!(ks_distance(&via, &law).unwrap() < 0.01);
        }
    }

    #[test]
    fn two_sample_statistic() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }
}
