//! One-parameter natural exponential families and their local
//! likelihood-ratio statistics.
//!
//! A family is described by its cumulant transform `psi`, so that the
//! density of `F_theta` is proportional to `exp(theta * y - psi(theta))`.
//! The Gaussian family carries a fixed, known dispersion `sigma^2`; its
//! parameter `theta` is the mean, `psi(theta) = theta^2 / 2` and every
//! log-likelihood quantity is divided by `sigma^2`.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential-family model with a known baseline dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NefModel {
    Gaussian { sigma: f64 },
    Bernoulli,
    Poisson,
}

/// A parameter on the mean scale: `mu` (Gaussian), `p` (Bernoulli) or
/// `lambda` (Poisson).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MeanParam(f64);

impl MeanParam {
    pub fn new(model: &NefModel, value: f64) -> Result<Self> {
        let ok = match model {
            NefModel::Gaussian { .. } => value.is_finite(),
            NefModel::Bernoulli => value > 0.0 && value < 1.0,
            NefModel::Poisson => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(MeanParam(value))
        } else {
            Err(Error::domain(format!(
                "mean parameter {value} outside the {} mean domain",
                model.name()
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl NefModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(NefModel::Gaussian { sigma })
        } else {
            Err(Error::domain(format!("gaussian sigma must be positive, got {sigma}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NefModel::Gaussian { .. } => "gaussian",
            NefModel::Bernoulli => "bernoulli",
            NefModel::Poisson => "poisson",
        }
    }

    /// Dispersion multiplying `psi''` in the variance (1 except for Gaussian).
    pub fn dispersion(&self) -> f64 {
        match self {
            NefModel::Gaussian { sigma } => sigma * sigma,
            _ => 1.0,
        }
    }

    /// The natural parameter domain is the whole real line for all three
    /// families.
    pub fn natural_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if matches!(self, NefModel::Poisson) && theta.exp() > 1e18 {
            Err(Error::domain(format!("Poisson rate exp({theta}) is too large")))
        } else if theta.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("natural parameter {theta} is not finite")))
        }
    }

    pub fn psi(&self, theta: f64) -> f64 {
        match self {
            NefModel::Gaussian { .. } => 0.5 * theta * theta,
            // log(1 + e^theta), written to stay accurate for large |theta|
            NefModel::Bernoulli => {
                if theta > 0.0 {
                    theta + (-theta).exp().ln_1p()
                } else {
                    theta.exp().ln_1p()
                }
            }
            NefModel::Poisson => theta.exp(),
        }
    }

    /// Mean map `m(theta) = psi'(theta)`.
    pub fn mean(&self, theta: f64) -> f64 {
        match self {
            NefModel::Gaussian { .. } => theta,
            NefModel::Bernoulli => logistic(theta),
            NefModel::Poisson => theta.exp(),
        }
    }

    /// Variance map `v(theta) = dispersion * psi''(theta)`.
    pub fn variance(&self, theta: f64) -> f64 {
        match self {
            NefModel::Gaussian { sigma } => sigma * sigma,
            NefModel::Bernoulli => {
                let p = logistic(theta);
                p * logistic(-theta)
            }
            NefModel::Poisson => theta.exp(),
        }
    }

    /// Inverse mean map on the interior of the mean domain.
    pub fn natural_from_mean(&self, mean: MeanParam) -> f64 {
        let m = mean.value();
        match self {
            NefModel::Gaussian { .. } => m,
            NefModel::Bernoulli => (m / (1.0 - m)).ln(),
            NefModel::Poisson => m.ln(),
        }
    }

    fn check_ybar(&self, ybar: f64) -> Result<()> {
        let ok = match self {
            NefModel::Gaussian { .. } => ybar.is_finite(),
            NefModel::Bernoulli => (0.0..=1.0).contains(&ybar),
            NefModel::Poisson => ybar >= 0.0 && ybar.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "local mean {ybar} outside the closed {} mean domain",
                self.name()
            )))
        }
    }

    /// Closed-form local LRT statistic `sqrt(2 |R| J(ybar, theta0))`.
    pub fn lrt_stat(&self, ybar: f64, region_size: usize, theta0: f64) -> Result<f64> {
        if region_size == 0 {
            return Err(Error::domain("region size must be at least 1"));
        }
        self.check_theta(theta0)?;
        self.check_ybar(ybar)?;
        Ok(self.lrt_unchecked(ybar, region_size as f64, theta0))
    }

    /// Hot-path variant of [`NefModel::lrt_stat`]; callers guarantee the
    /// preconditions.
    #[inline]
    pub(crate) fn lrt_unchecked(&self, ybar: f64, size: f64, theta0: f64) -> f64 {
        match *self {
            NefModel::Gaussian { sigma } => size.sqrt() * (ybar - theta0).abs() / sigma,
            NefModel::Bernoulli => {
                let p0 = logistic(theta0);
                let q0 = logistic(-theta0);
                let j = bregman_xlogx(p0, ybar - p0) + bregman_xlogx(q0, p0 - ybar);
                (2.0 * size * j.max(0.0)).sqrt()
            }
            NefModel::Poisson => {
                let lambda0 = theta0.exp();
                let j = bregman_xlogx(lambda0, ybar - lambda0);
                (2.0 * size * j.max(0.0)).sqrt()
            }
        }
    }

    /// Convex conjugate `psi*(y) = sup_theta [theta y - psi(theta)]`,
    /// evaluated through the inverse mean map, with its continuous limits
    /// on the boundary of the mean domain.
    pub fn conjugate(&self, y: f64) -> Result<f64> {
        self.check_ybar(y)?;
        let boundary = match self {
            NefModel::Gaussian { .. } => false,
            NefModel::Bernoulli => y == 0.0 || y == 1.0,
            NefModel::Poisson => y == 0.0,
        };
        if boundary {
            return Ok(0.0);
        }
        let theta_hat = self.natural_from_mean(MeanParam(y));
        Ok(theta_hat * y - self.psi(theta_hat))
    }

    /// Local LRT statistic through the Legendre-Fenchel representation
    /// `J(y, theta0) = psi*(y) - (theta0 y - psi(theta0))`.
    pub fn lrt_stat_generic(&self, ybar: f64, region_size: usize, theta0: f64) -> Result<f64> {
        if region_size == 0 {
            return Err(Error::domain("region size must be at least 1"));
        }
        self.check_theta(theta0)?;
        self.check_ybar(ybar)?;
        if ybar == self.mean(theta0) {
            return Ok(0.0);
        }
        let j = (self.conjugate(ybar)? - (theta0 * ybar - self.psi(theta0))) / self.dispersion();
        Ok((2.0 * region_size as f64 * j.max(0.0)).sqrt())
    }

    /// One draw from `F_theta`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.sample_unchecked(theta, rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match *self {
            NefModel::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                theta + sigma * z
            }
            NefModel::Bernoulli => {
                let u: f64 = rng.random();
                if u < logistic(theta) {
                    1.0
                } else {
                    0.0
                }
            }
            NefModel::Poisson => {
                // rand_distr: Knuth's product method below lambda = 12, rejection above
                Poisson::new(theta.exp())
                    .expect("rate checked by check_theta")
                    .sample(rng)
            }
        }
    }

    /// `(y - m(theta0)) / sqrt(v(theta0))`.
    pub fn standardize(&self, y: f64, theta0: f64) -> f64 {
        (y - self.mean(theta0)) / self.variance(theta0).sqrt()
    }
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `x log(x / c) - (x - c)` at `x = c + diff`, for `c > 0` and `x >= 0`,
/// with `0 log 0 = 0`. Written as `c g(r)` with `r = diff / c` and
/// `g(r) = (1 + r) log1p(r) - r`, so it stays accurate when `x` is close to
/// `c`. Taking the difference directly avoids rounding in `1 - ybar`.
#[inline]
fn bregman_xlogx(c: f64, diff: f64) -> f64 {
    let r = diff / c;
    if r <= -1.0 {
        return c;
    }
    let g = if r.abs() < 1e-2 {
        // alternating series sum_{k>=2} (-r)^k / (k (k - 1))
        let mut term = r * r;
        let mut sum = 0.0;
        for k in 2..12 {
            sum += term / (k * (k - 1)) as f64;
            term *= -r;
        }
        sum
    } else {
        (1.0 + r) * r.ln_1p() - r
    };
    c * g.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> [NefModel; 3] {
        [NefModel::Gaussian { sigma: 1.3 }, NefModel::Bernoulli, NefModel::Poisson]
    }

    #[test]
    fn gaussian_zero_discrepancy() {
        let m = NefModel::gaussian(1.0).unwrap();
        assert_eq!(m.lrt_stat(0.0, 4, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_closed_form() {
        let m = NefModel::gaussian(1.0).unwrap();
        // sqrt(4) * 1.5 / 1
        assert_relative_eq!(m.lrt_stat(1.5, 4, 0.0).unwrap(), 3.0, max_relative = 1e-15);
        let m2 = NefModel::gaussian(2.0).unwrap();
        assert_relative_eq!(m2.lrt_stat_generic(3.0, 9, 1.0).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn poisson_closed_form() {
        let expected = (2.0 * (2.0 * 2f64.ln() - 1.0)).sqrt();
        let t = NefModel::Poisson.lrt_stat(2.0, 1, 1f64.ln()).unwrap();
        assert_relative_eq!(t, expected, max_relative = 1e-14);
        assert!((t - 0.878971).abs() < 1e-6);
    }

    #[test]
    fn bernoulli_boundary() {
        let t = NefModel::Bernoulli.lrt_stat(1.0, 2, 0.0).unwrap();
        assert_relative_eq!(t, (4.0 * 2f64.ln()).sqrt(), max_relative = 1e-14);
        assert!((t - 1.665109).abs() < 1e-6);
        let g = NefModel::Bernoulli.lrt_stat_generic(1.0, 2, 0.0).unwrap();
        assert_relative_eq!(g, t, max_relative = 1e-12);
        let z = NefModel::Bernoulli.lrt_stat_generic(0.0, 2, 0.0).unwrap();
        assert_relative_eq!(z, t, max_relative = 1e-12);
    }

    #[test]
    fn poisson_zero_mean_limit() {
        for &(lambda0, k) in &[(1.0, 1usize), (0.3, 7), (4.0, 25)] {
            let expected = (2.0 * k as f64 * lambda0).sqrt();
            let th = f64::ln(lambda0);
            assert_relative_eq!(
                NefModel::Poisson.lrt_stat(0.0, k, th).unwrap(),
                expected,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                NefModel::Poisson.lrt_stat_generic(0.0, k, th).unwrap(),
                expected,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn generic_zero_at_baseline_mean() {
        for m in models() {
            for &th in &[-1.5, 0.0, 0.7] {
                assert_eq!(m.lrt_stat_generic(m.mean(th), 5, th).unwrap(), 0.0);
                assert_eq!(m.lrt_stat(m.mean(th), 5, th).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(NefModel::Bernoulli.lrt_stat(1.2, 3, 0.0).is_err());
        assert!(NefModel::Bernoulli.lrt_stat(-0.1, 3, 0.0).is_err());
        assert!(NefModel::Poisson.lrt_stat(-1.0, 3, 0.0).is_err());
        assert!(NefModel::Poisson.lrt_stat_generic(-1.0, 3, 0.0).is_err());
        assert!(NefModel::Poisson.lrt_stat(1.0, 0, 0.0).is_err());
        assert!(NefModel::gaussian(0.0).is_err());
        assert!(MeanParam::new(&NefModel::Bernoulli, 1.0).is_err());
        assert!(MeanParam::new(&NefModel::Poisson, 0.0).is_err());
    }

    #[test]
    fn mean_and_variance_match_psi_derivatives() {
        let h = 1e-4;
        for m in models() {
            let mut th = -3.0;
            while th <= 3.0 {
                let d1 = (m.psi(th + h) - m.psi(th - h)) / (2.0 * h);
                let d2 = (m.psi(th + h) - 2.0 * m.psi(th) + m.psi(th - h)) / (h * h);
                assert!((m.mean(th) - d1).abs() <= 1e-6, "{m:?} theta={th}");
                assert!((m.variance(th) - m.dispersion() * d2).abs() <= 1e-5, "{m:?} theta={th}");
                assert!(m.variance(th) > 0.0);
                th += 0.25;
            }
        }
    }

    #[test]
    fn natural_parameter_round_trips() {
        for &p in &[1e-6, 0.1, 0.5, 0.73, 0.999] {
            let th = NefModel::Bernoulli.natural_from_mean(MeanParam::new(&NefModel::Bernoulli, p).unwrap());
            assert!((NefModel::Bernoulli.mean(th) - p).abs() <= 1e-12);
        }
        for &l in &[1e-3, 0.5, 1.0, 4.0, 250.0] {
            let th = NefModel::Poisson.natural_from_mean(MeanParam::new(&NefModel::Poisson, l).unwrap());
            assert!((NefModel::Poisson.mean(th) - l).abs() <= 1e-12 * l.max(1.0));
        }
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(NefModel::Poisson.standardize(6.0, 4f64.ln()), 1.0);
        assert_eq!(NefModel::Bernoulli.standardize(1.0, 0.0), 1.0);
        let g = NefModel::gaussian(2.0).unwrap();
        assert_eq!(g.standardize(0.3, 0.3), 0.0);
    }

    #[test]
    fn bernoulli_sample_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let y = NefModel::Bernoulli.sample(0.0, &mut rng).unwrap();
            assert!(y == 0.0 || y == 1.0);
        }
    }

    #[test]
    fn gaussian_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = NefModel::gaussian(1.0).unwrap();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| m.sample(0.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.004, "mean {mean}");
    }

    #[test]
    fn poisson_sample_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| NefModel::Poisson.sample(4f64.ln(), &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((3.97..4.03).contains(&var), "variance {var}");
        // 4 standard errors of the mean
        assert!((mean - 4.0).abs() < 4.0 * (4.0 / n as f64).sqrt());
    }
}
