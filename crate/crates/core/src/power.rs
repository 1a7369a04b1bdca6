//! Power of the scan test: the asymptotic expansion for the single-scale
//! oracle, the detection boundary quantity, and Monte-Carlo power studies.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::calibrate::{check_table, QuantileTable, Variant};
use crate::error::{Error, Result};
use crate::nef::NefModel;
use crate::regions::{Region, RegionSystem};
use crate::rng::{domain, substream};
use crate::scan::{Backend, Field, ScaleProfile, Scanner};

/// Poisson rates inside an anomaly must lie in `[1/B, B]`.
pub const POISSON_RATE_BOUND: f64 = 100.0;

/// Standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of `|N(mu, sigma2)|` at `x >= 0`.
pub fn folded_normal_sf(x: f64, mu: f64, sigma2: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("x must be finite and >= 0, got {x}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() || !mu.is_finite() {
        return Err(Error::domain(format!("need finite mu and sigma2 > 0, got mu={mu}, sigma2={sigma2}")));
    }
    let s = sigma2.sqrt();
    Ok((std_normal_cdf(-(x + mu) / s) + std_normal_cdf((mu - x) / s)).clamp(0.0, 1.0))
}

struct Expansion {
    shift: f64,
    mu: f64,
    ratio: f64,
}

#[allow(clippy::too_many_arguments)]
fn expansion(
    model: &NefModel,
    theta0: f64,
    theta1: f64,
    a_n: f64,
    n: usize,
    d: usize,
    v: f64,
) -> Result<Expansion> {
    model.check_theta(theta0)?;
    model.check_theta(theta1)?;
    if !(a_n > 0.0 && a_n < 1.0) {
        return Err(Error::domain(format!("a_n must lie in (0, 1), got {a_n}")));
    }
    if !(v > 0.0) || !v.is_finite() || n < 2 || d == 0 {
        return Err(Error::domain("need v > 0, n >= 2 and d >= 1"));
    }
    let (v0, v1) = (model.variance(theta0), model.variance(theta1));
    if !(v0 > 0.0 && v1 > 0.0 && v0.is_finite() && v1.is_finite()) {
        return Err(Error::domain("variance function must be positive and finite at both parameters"));
    }
    let scale = (n as f64).powf(d as f64 / 2.0) * a_n.sqrt();
    Ok(Expansion {
        shift: (2.0 * v * (1.0 / a_n).ln()).sqrt(),
        mu: scale * (model.mean(theta1) - model.mean(theta0)) / v0.sqrt(),
        ratio: v1 / v0,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Asymptotic power of the single-scale oracle test at level `alpha` with
/// threshold `q_oracle`: `alpha + (1 - alpha) F(q + sqrt(2v log(1/a_n)), mu, v1/v0)`
/// with `mu = n^{d/2} sqrt(a_n) (m(theta1) - m(theta0)) / sqrt(v(theta0))`.
/// The vanishing remainder is dropped, so this is an approximation.
#[allow(clippy::too_many_arguments)]
pub fn oracle_power(
    model: &NefModel,
    theta0: f64,
    theta1: f64,
    a_n: f64,
    n: usize,
    d: usize,
    v: f64,
    q_oracle: f64,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let e = expansion(model, theta0, theta1, a_n, n, d, v)?;
    let x = (q_oracle + e.shift).max(0.0);
    Ok(alpha + (1.0 - alpha) * folded_normal_sf(x, e.mu, e.ratio)?)
}

/// `(sqrt(2v log(1/a_n) v(theta0)) - n^{d/2} sqrt(a_n) |m(theta1) - m(theta0)|) / sqrt(v(theta1))`.
/// Detection with asymptotic power one happens iff this diverges to `-inf`.
#[allow(clippy::too_many_arguments)]
pub fn boundary_gap(
    model: &NefModel,
    theta0: f64,
    theta1: f64,
    a_n: f64,
    n: usize,
    d: usize,
    v: f64,
) -> Result<f64> {
    let e = expansion(model, theta0, theta1, a_n, n, d, v)?;
    let v0 = model.variance(theta0);
    let v1 = model.variance(theta1);
    Ok((e.shift * v0.sqrt() - e.mu.abs() * v0.sqrt()) / v1.sqrt())
}

/// The cube of side `h` anchored at `(n - h) / 2 + 1` on every axis.
pub fn centered_cube(h: usize, d: usize, n: usize) -> Result<Region> {
    if h == 0 || h > n {
        return Err(Error::ExtentTooLarge { extent: vec![h; d], n });
    }
    Region::new(vec![(n - h) / 2 + 1; d], vec![h; d], n)
}

/// A block with natural parameter `theta1` inside and `theta0` outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub block: Region,
    pub theta0: f64,
    pub theta1: f64,
}

impl AnomalySpec {
    pub fn new(model: &NefModel, block: Region, theta0: f64, theta1: f64, n: usize) -> Result<Self> {
        Region::new(block.anchor.clone(), block.extent.clone(), n)?;
        model.check_theta(theta0)?;
        model.check_theta(theta1)?;
        if theta1 == theta0 {
            return Err(Error::domain("anomaly parameter equals the baseline"));
        }
        if let NefModel::Poisson = model {
            let rate = theta1.exp();
            if !(1.0 / POISSON_RATE_BOUND..=POISSON_RATE_BOUND).contains(&rate) {
                return Err(Error::domain(format!(
                    "Poisson anomaly rate {rate} outside [1/{POISSON_RATE_BOUND}, {POISSON_RATE_BOUND}]"
                )));
            }
        }
        Ok(AnomalySpec { block, theta0, theta1 })
    }

    /// The degenerate block with `theta1 = theta0`, for level checks.
    pub fn null(model: &NefModel, block: Region, theta0: f64, n: usize) -> Result<Self> {
        Region::new(block.anchor.clone(), block.extent.clone(), n)?;
        model.check_theta(theta0)?;
        Ok(AnomalySpec { block, theta0, theta1: theta0 })
    }

    /// A centered cube of side `h`, the placement used by the power studies.
    pub fn centered_cube(model: &NefModel, h: usize, d: usize, n: usize, theta0: f64, theta1: f64) -> Result<Self> {
        Self::new(model, centered_cube(h, d, n)?, theta0, theta1, n)
    }

    /// The anomalous cells as 1-based multi-indices.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let d = self.block.dim();
        let mut out = Vec::with_capacity(self.block.size());
        let mut idx = self.block.anchor.clone();
        loop {
            out.push(idx.clone());
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.block.anchor[k] + self.block.extent[k] {
                    break;
                }
                idx[k] = self.block.anchor[k];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub model: String,
    pub n: usize,
    pub d: usize,
    pub kind: String,
    pub v: f64,
    pub min_size: usize,
    pub scales: String,
    pub alpha: f64,
    pub q: f64,
    pub anomaly: AnomalySpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub empirical: f64,
    pub replicates: usize,
    pub std_err: f64,
    pub config: PowerConfig,
}

impl PowerEstimate {
    fn from_hits(hits: usize, replicates: usize, config: PowerConfig) -> Self {
        let p = hits as f64 / replicates as f64;
        PowerEstimate { empirical: p, replicates, std_err: (p * (1.0 - p) / replicates as f64).sqrt(), config }
    }
}

/// One thresholded test evaluated in a power study.
#[derive(Debug, Clone, Copy)]
pub struct PowerArm<'t> {
    pub variant: Variant,
    pub table: &'t QuantileTable,
    pub alpha: f64,
}

/// Monte-Carlo power of several tests on shared data: replicate `i` draws
/// one field from substream `i` of `seed` and every arm is evaluated on
/// it. The arms' systems are `base` with their own `v` and `r_n`.
pub fn power_study(
    model: &NefModel,
    theta0: f64,
    anomaly: &AnomalySpec,
    base: &RegionSystem,
    arms: &[PowerArm<'_>],
    replicates: usize,
    seed: u64,
) -> Result<Vec<PowerEstimate>> {
    if replicates == 0 {
        return Err(Error::domain("at least one replicate is required"));
    }
    model.check_theta(theta0)?;
    let mut thresholds = Vec::with_capacity(arms.len());
    let mut systems = Vec::with_capacity(arms.len());
    for arm in arms {
        if arm.variant.min_size < base.min_size {
            return Err(Error::domain("arm r_n below the base system's"));
        }
        let sys = base.clone().with_v(arm.variant.v)?.with_min_size(arm.variant.min_size)?;
        check_table(arm.table, &sys, false)?;
        thresholds.push(arm.table.quantile(arm.alpha)?);
        systems.push(sys);
    }
    Region::new(anomaly.block.anchor.clone(), anomaly.block.extent.clone(), base.n)?;
    if anomaly.block.dim() != base.d {
        return Err(Error::Shape("anomaly dimension differs from the system's".into()));
    }
    let hits: Vec<Vec<bool>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain::POWER, i as u64);
            let field =
                Field::sample_with_block(model, anomaly.theta0, anomaly.theta1, &anomaly.block, base.d, base.n, &mut rng)?;
            let scanner = Scanner::new(&field, model, theta0, base, Backend::Auto)?;
            let profile = ScaleProfile::from_scanner(&scanner)?;
            Ok(arms
                .iter()
                .zip(&thresholds)
                .map(|(arm, &q)| profile.statistic(arm.variant.v, arm.variant.min_size) > q)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(arms
        .iter()
        .enumerate()
        .map(|(j, arm)| {
            let count = hits.iter().filter(|h| h[j]).count();
            let sys = &systems[j];
            let config = PowerConfig {
                model: model.name().to_string(),
                n: sys.n,
                d: sys.d,
                kind: sys.kind.as_str().to_string(),
                v: sys.v,
                min_size: sys.min_size,
                scales: sys.scale_policy.describe(),
                alpha: arm.alpha,
                q: thresholds[j],
                anomaly: anomaly.clone(),
                seed,
            };
            PowerEstimate::from_hits(count, replicates, config)
        })
        .collect())
}

/// Fraction of replicates in which the multiple test at level `alpha`
/// reports at least one region.
#[allow(clippy::too_many_arguments)]
pub fn empirical_power(
    model: &NefModel,
    theta0: f64,
    anomaly: &AnomalySpec,
    system: &RegionSystem,
    table: &QuantileTable,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<PowerEstimate> {
    let arm = PowerArm { variant: Variant { v: system.v, min_size: system.min_size }, table, alpha };
    Ok(power_study(model, theta0, anomaly, system, &[arm], replicates, seed)?.remove(0))
}

pub const CSV_HEADER: &str =
    "model,n,d,kind,scales,v,r_n,alpha,q,block_anchor,block_extent,theta0,theta1,seed,replicates,power,std_err";

/// Tabular output, one row per estimate.
pub fn to_csv(estimates: &[PowerEstimate]) -> String {
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x");
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for e in estimates {
        let c = &e.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.model,
            c.n,
            c.d,
            c.kind,
            c.scales,
            c.v,
            c.min_size,
            c.alpha,
            c.q,
            join(&c.anomaly.block.anchor),
            join(&c.anomaly.block.extent),
            c.anomaly.theta0,
            c.anomaly.theta1,
            c.seed,
            e.replicates,
            e.empirical,
            e.std_err
        );
    }
    s
}
