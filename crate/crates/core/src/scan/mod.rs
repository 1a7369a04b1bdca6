//! The penalized multiscale scan statistic and its Gaussian surrogate.
//!
//! For every extent of a [`RegionSystem`] the local LRT statistic is a
//! function of the box mean that decreases below the baseline mean and
//! increases above it. The maximum over all anchors of one extent is
//! therefore attained at the smallest or the largest box sum, so a scale
//! only needs the extremes of its box sums. The anchor realizing the
//! global maximum is recovered afterwards with one full pass over the
//! winning scale.

mod fft;
mod field;
mod sat;

pub use fft::FftSums;
pub use field::Field;
pub use sat::SummedAreaTable;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nef::NefModel;
use crate::regions::{Region, RegionSystem};

/// Scale penalty `sqrt(2 v (log(n^d / r) + 1))`.
pub fn penalty(v: f64, r: usize, n: usize, d: usize) -> Result<f64> {
    let total = (n as f64).powi(d as i32);
    if r == 0 || r as f64 > total {
        return Err(Error::domain(format!("region size {r} outside [1, {n}^{d}]")));
    }
    Ok(penalty_unchecked(v, r, total))
}

#[inline]
fn penalty_unchecked(v: f64, r: usize, total: f64) -> f64 {
    (2.0 * v * ((total / r as f64).ln() + 1.0)).sqrt()
}

/// Box sums for every valid anchor of one extent, row-major over anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSums {
    /// Number of anchors per axis, `n - extent_k + 1`.
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl BoxSums {
    /// Value at a 1-based anchor.
    pub fn at(&self, anchor: &[usize]) -> f64 {
        let flat = anchor.iter().zip(&self.shape).fold(0, |acc, (&a, &s)| acc * s + (a - 1));
        self.values[flat]
    }

    /// 1-based anchor of the flat position `pos`.
    pub fn anchor_of(&self, mut pos: usize) -> Vec<usize> {
        let mut a = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            a[k] = pos % self.shape[k] + 1;
            pos /= self.shape[k];
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
}

impl Extremes {
    pub const EMPTY: Extremes = Extremes { min: f64::INFINITY, max: f64::NEG_INFINITY };

    #[inline]
    pub fn update(&mut self, s: f64) {
        if s < self.min {
            self.min = s;
        }
        if s > self.max {
            self.max = s;
        }
    }
}

/// A local-sum backend prepared for one field.
pub trait LocalSums: Send + Sync {
    fn dim(&self) -> usize;
    fn side(&self) -> usize;
    fn box_sums(&self, extent: &[usize]) -> Result<BoxSums>;

    /// Smallest and largest box sum for one extent. Must agree bit-for-bit
    /// with [`LocalSums::box_sums`].
    fn extremes(&self, extent: &[usize]) -> Result<Extremes> {
        let sums = self.box_sums(extent)?;
        let mut e = Extremes::EMPTY;
        for &s in &sums.values {
            e.update(s);
        }
        Ok(e)
    }
}

pub(crate) fn check_extent(extent: &[usize], d: usize, n: usize) -> Result<()> {
    if extent.len() != d {
        return Err(Error::Shape(format!("extent {extent:?} does not have dimension {d}")));
    }
    if extent.iter().any(|&e| e == 0 || e > n) {
        return Err(Error::ExtentTooLarge { extent: extent.to_vec(), n });
    }
    Ok(())
}

pub fn local_sums_sat(field: &Field, extent: &[usize]) -> Result<BoxSums> {
    check_extent(extent, field.dim(), field.side())?;
    SummedAreaTable::new(field).box_sums(extent)
}

pub fn local_sums_fft(field: &Field, extent: &[usize]) -> Result<BoxSums> {
    check_extent(extent, field.dim(), field.side())?;
    FftSums::new(field).box_sums(extent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Summed-area table up to `d = 3`, otherwise whichever has the
    /// smaller per-scale cost estimate.
    #[default]
    Auto,
    Sat,
    Fft,
}

impl Backend {
    fn resolve(self, d: usize, n: usize) -> Backend {
        match self {
            Backend::Auto => {
                // SAT costs 2^d reads per anchor; FFT roughly d log2(n) per grid point
                let fft_cost = 4.0 * d as f64 * (n as f64).log2().max(1.0);
                if d <= 3 || ((1usize << d.min(60)) as f64) <= fft_cost {
                    Backend::Sat
                } else {
                    Backend::Fft
                }
            }
            other => other,
        }
    }

    pub fn prepare(self, field: &Field) -> Box<dyn LocalSums> {
        match self.resolve(field.dim(), field.side()) {
            Backend::Fft => Box::new(FftSums::new(field)),
            _ => Box::new(SummedAreaTable::new(field)),
        }
    }
}

/// Per-scale summary of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleMax {
    pub extent: Vec<usize>,
    pub size: usize,
    /// Largest unpenalized local statistic at this extent.
    pub max_lrt: f64,
    pub penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub statistic: f64,
    pub argmax: Region,
    pub argmax_lrt: f64,
    pub per_scale_max: Vec<ScaleMax>,
}

/// One significant region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub region: Region,
    pub lrt: f64,
    pub penalized: f64,
}

fn check_field_for_model(field: &Field, model: &NefModel) -> Result<()> {
    let bad = match model {
        NefModel::Gaussian { .. } => None,
        NefModel::Bernoulli => field.values().iter().position(|&y| !(0.0..=1.0).contains(&y)),
        NefModel::Poisson => field.values().iter().position(|&y| y < 0.0),
    };
    match bad {
        Some(i) => Err(Error::domain(format!(
            "value {} at flat index {i} is outside the {} support",
            field.values()[i],
            model.name()
        ))),
        None => Ok(()),
    }
}

#[inline]
fn clamp_mean(model: &NefModel, ybar: f64) -> f64 {
    match model {
        NefModel::Gaussian { .. } => ybar,
        NefModel::Bernoulli => ybar.clamp(0.0, 1.0),
        NefModel::Poisson => ybar.max(0.0),
    }
}

/// A field prepared for scanning against one model, baseline and system.
pub struct Scanner<'a> {
    model: NefModel,
    theta0: f64,
    system: &'a RegionSystem,
    extents: Vec<Vec<usize>>,
    sums: Box<dyn LocalSums>,
    total: f64,
}

impl<'a> Scanner<'a> {
    pub fn new(
        field: &Field,
        model: &NefModel,
        theta0: f64,
        system: &'a RegionSystem,
        backend: Backend,
    ) -> Result<Self> {
        if field.dim() != system.d || field.side() != system.n {
            return Err(Error::Shape(format!(
                "field is {}^{} but the region system expects {}^{}",
                field.side(),
                field.dim(),
                system.n,
                system.d
            )));
        }
        model.check_theta(theta0)?;
        check_field_for_model(field, model)?;
        let extents = system.enumerate_scales()?;
        Ok(Scanner {
            model: *model,
            theta0,
            system,
            extents,
            sums: backend.prepare(field),
            total: system.total() as f64,
        })
    }

    pub fn extents(&self) -> &[Vec<usize>] {
        &self.extents
    }

    #[inline]
    fn lrt_of_sum(&self, sum: f64, size: usize) -> f64 {
        let k = size as f64;
        self.model.lrt_unchecked(clamp_mean(&self.model, sum / k), k, self.theta0)
    }

    /// Largest unpenalized local statistic for each extent, in order.
    pub fn scale_maxima(&self) -> Result<Vec<f64>> {
        self.extents
            .iter()
            .map(|e| {
                let size: usize = e.iter().product();
                let ex = self.sums.extremes(e)?;
                Ok(self.lrt_of_sum(ex.min, size).max(self.lrt_of_sum(ex.max, size)))
            })
            .collect()
    }

    pub fn scan(&self) -> Result<ScanResult> {
        let maxima = self.scale_maxima()?;
        let mut per_scale_max: Vec<ScaleMax> = Vec::with_capacity(self.extents.len());
        let mut best = 0usize;
        for (i, (e, &m)) in self.extents.iter().zip(&maxima).enumerate() {
            let size: usize = e.iter().product();
            let penalized = m - penalty_unchecked(self.system.v, size, self.total);
            if i == 0 || penalized > per_scale_max[best].penalized {
                best = i;
            }
            per_scale_max.push(ScaleMax { extent: e.clone(), size, max_lrt: m, penalized });
        }
        let winner = &per_scale_max[best];
        let sums = self.sums.box_sums(&winner.extent)?;
        let pos = sums
            .values
            .iter()
            .position(|&s| self.lrt_of_sum(s, winner.size) == winner.max_lrt)
            .expect("the per-scale maximum is attained by one of its anchors");
        let argmax = Region { anchor: sums.anchor_of(pos), extent: winner.extent.clone() };
        Ok(ScanResult {
            statistic: winner.penalized,
            argmax,
            argmax_lrt: winner.max_lrt,
            per_scale_max,
        })
    }

    /// All regions whose penalized statistic is strictly above `threshold`,
    /// in enumeration order.
    pub fn exceedances(&self, threshold: f64) -> Result<Vec<Exceedance>> {
        let maxima = self.scale_maxima()?;
        let mut out = Vec::new();
        for (e, &m) in self.extents.iter().zip(&maxima) {
            let size: usize = e.iter().product();
            let pen = penalty_unchecked(self.system.v, size, self.total);
            if m - pen <= threshold {
                continue;
            }
            let sums = self.sums.box_sums(e)?;
            for (pos, &s) in sums.values.iter().enumerate() {
                let lrt = self.lrt_of_sum(s, size);
                if lrt - pen > threshold {
                    out.push(Exceedance {
                        region: Region { anchor: sums.anchor_of(pos), extent: e.clone() },
                        lrt,
                        penalized: lrt - pen,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// `T_n = max_R [T_R(Y, theta0) - pen_v(|R|)]` over the system.
pub fn scan_statistic(field: &Field, model: &NefModel, theta0: f64, system: &RegionSystem) -> Result<ScanResult> {
    Scanner::new(field, model, theta0, system, Backend::Auto)?.scan()
}

/// `M_n`: the penalized scan of i.i.d. standard normal noise. Identical to
/// the Gaussian scan with `sigma = 1` and baseline 0.
pub fn gaussian_scan_statistic(noise: &Field, system: &RegionSystem) -> Result<ScanResult> {
    scan_statistic(noise, &NefModel::Gaussian { sigma: 1.0 }, 0.0, system)
}

/// Per-scale maxima of one field, reusable for any penalty constant and
/// any lower scale bound at least as large as the profiled one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleProfile {
    pub n: usize,
    pub d: usize,
    pub sizes: Vec<usize>,
    pub maxima: Vec<f64>,
}

impl ScaleProfile {
    pub fn from_scanner(scanner: &Scanner<'_>) -> Result<Self> {
        Ok(ScaleProfile {
            n: scanner.system.n,
            d: scanner.system.d,
            sizes: scanner.extents.iter().map(|e| e.iter().product()).collect(),
            maxima: scanner.scale_maxima()?,
        })
    }

    /// Penalized maximum over the scales with at least `min_size` points.
    /// Returns `-inf` when no scale qualifies.
    pub fn statistic(&self, v: f64, min_size: usize) -> f64 {
        let total = (self.n as f64).powi(self.d as i32);
        self.sizes
            .iter()
            .zip(&self.maxima)
            .filter(|(&s, _)| s >= min_size)
            .map(|(&s, &m)| m - penalty_unchecked(v, s, total))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
