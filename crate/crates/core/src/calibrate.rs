//! Monte-Carlo calibration of the scan statistic.
//!
//! The null distribution of `T_n` is approximated by that of its Gaussian
//! surrogate `M_n`, which depends only on the region system. Samples of
//! `M_n` are simulated once, stored in full and served at any level.
//!
//! On disk a table is `MSCANQT1`, a little-endian `u32` byte length, that
//! many bytes of `key=value` lines, a little-endian `u64` sample count
//! and the sorted sample as little-endian `f64`s.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nef::NefModel;
use crate::regions::{RegionKind, RegionSystem, ScalePolicy};
use crate::rng::{domain, substream};
use crate::scan::{Backend, Field, ScaleProfile, Scanner};

pub const TABLE_MAGIC: &[u8; 8] = b"MSCANQT1";

/// Default replicate count.
pub const DEFAULT_REPLICATES: usize = 10_000;

/// Default cap on `n^d * replicates`.
pub const DEFAULT_BUDGET: u128 = 1 << 38;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub n: usize,
    pub d: usize,
    pub kind: RegionKind,
    pub min_size: usize,
    pub v: f64,
    pub scale_policy: String,
    pub replicates: usize,
    pub seed: u64,
    pub version: String,
    /// What was simulated: `M_n` or `T_n:<model>:<theta0>`.
    pub statistic: String,
}

impl TableMeta {
    pub fn for_system(system: &RegionSystem, replicates: usize, seed: u64) -> Self {
        TableMeta {
            n: system.n,
            d: system.d,
            kind: system.kind,
            min_size: system.min_size,
            v: system.v,
            scale_policy: system.scale_policy.describe(),
            replicates,
            seed,
            version: crate::VERSION.to_string(),
            statistic: "M_n".to_string(),
        }
    }

    fn to_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "d={}", self.d);
        let _ = writeln!(s, "kind={}", self.kind.as_str());
        let _ = writeln!(s, "min_size={}", self.min_size);
        let _ = writeln!(s, "v={}", self.v);
        let _ = writeln!(s, "scales={}", self.scale_policy);
        let _ = writeln!(s, "replicates={}", self.replicates);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "statistic={}", self.statistic);
        s
    }

    fn from_pairs<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (k, v) in pairs {
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Format(format!("missing meta key '{k}'")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad value for '{k}'")))
        };
        Ok(TableMeta {
            n: num("n")?,
            d: num("d")?,
            kind: get("kind")?.parse().map_err(|_| Error::Format("bad region kind".into()))?,
            min_size: num("min_size")?,
            v: get("v")?.parse().map_err(|_| Error::Format("bad value for 'v'".into()))?,
            scale_policy: get("scales")?.to_string(),
            replicates: num("replicates")?,
            seed: get("seed")?.parse().map_err(|_| Error::Format("bad value for 'seed'".into()))?,
            version: get("version")?.to_string(),
            statistic: get("statistic")?.to_string(),
        })
    }

    /// Differences from the scan configuration `system`, one message each.
    pub fn mismatches(&self, system: &RegionSystem) -> Vec<String> {
        let mut out = Vec::new();
        if self.n != system.n {
            out.push(format!("table n={} but scan n={}", self.n, system.n));
        }
        if self.d != system.d {
            out.push(format!("table d={} but scan d={}", self.d, system.d));
        }
        if self.kind != system.kind {
            out.push(format!("table kind={} but scan kind={}", self.kind.as_str(), system.kind.as_str()));
        }
        if self.min_size != system.min_size {
            out.push(format!("table r_n={} but scan r_n={}", self.min_size, system.min_size));
        }
        if self.v != system.v {
            out.push(format!("table v={} but scan v={}", self.v, system.v));
        }
        let policy = system.scale_policy.describe();
        if self.scale_policy != policy {
            out.push(format!("table scales={} but scan scales={policy}", self.scale_policy));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub meta: TableMeta,
    sample: Vec<f64>,
}

impl QuantileTable {
    pub fn new(meta: TableMeta, mut sample: Vec<f64>) -> Result<Self> {
        if sample.len() != meta.replicates {
            return Err(Error::Format(format!(
                "sample has {} values but meta declares {}",
                sample.len(),
                meta.replicates
            )));
        }
        if sample.iter().any(|x| x.is_nan()) {
            return Err(Error::Format("sample contains NaN".into()));
        }
        sample.sort_by(f64::total_cmp);
        Ok(QuantileTable { meta, sample })
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    /// The `ceil((1 - alpha) N)`-th order statistic.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        quantile(self, alpha)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.meta.to_lines();
        let mut out = Vec::with_capacity(8 + 4 + meta.len() + 8 + 8 * self.sample.len());
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.sample.len() as u64).to_le_bytes());
        for x in &self.sample {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 8 && &bytes[..8] == TABLE_MAGIC {
            return Self::from_binary(&bytes[8..]);
        }
        match std::str::from_utf8(bytes) {
            Ok(text) if text.starts_with('#') => Self::from_text(text),
            _ => Err(Error::Format("not a quantile table (bad magic)".into())),
        }
    }

    fn from_binary(mut rest: &[u8]) -> Result<Self> {
        let mut take = |k: usize| -> Result<&[u8]> {
            if rest.len() < k {
                return Err(Error::Format("truncated quantile table".into()));
            }
            let (head, tail) = rest.split_at(k);
            rest = tail;
            Ok(head)
        };
        let meta_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let meta_text = std::str::from_utf8(take(meta_len)?)
            .map_err(|_| Error::Format("meta block is not UTF-8".into()))?;
        let meta = TableMeta::from_pairs(meta_text.lines().filter_map(|l| l.split_once('=')))?;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if count != meta.replicates {
            return Err(Error::Format("sample count disagrees with meta".into()));
        }
        let body = take(count.checked_mul(8).ok_or_else(|| Error::Format("bad count".into()))?)?;
        let sample: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after sample".into()));
        }
        if sample.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("sample is not sorted".into()));
        }
        QuantileTable::new(meta, sample)
    }

    /// Plain-text export: `# key=value` header lines, then one value per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in self.meta.to_lines().lines() {
            let _ = writeln!(s, "# {line}");
        }
        for x in &self.sample {
            let _ = writeln!(s, "{x:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut sample = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    pairs.push((k, v));
                }
            } else if !line.trim().is_empty() {
                sample.push(line.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad value '{line}'")))?);
            }
        }
        let meta = TableMeta::from_pairs(pairs.into_iter())?;
        QuantileTable::new(meta, sample)
    }
}

/// `ceil((1 - alpha) N)`-th order statistic of the table's sample.
pub fn quantile(table: &QuantileTable, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = table.sample.len();
    if n == 0 {
        return Err(Error::Format("empty table".into()));
    }
    let x = (1.0 - alpha) * n as f64;
    // absorb representation error in (1 - alpha) * N before taking the ceiling
    let k = ((x - x * 1e-12).ceil() as usize).clamp(1, n);
    Ok(table.sample[k - 1])
}

pub fn save_table(table: &QuantileTable, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&table.to_bytes())?;
    Ok(())
}

pub fn load_table(path: impl AsRef<Path>) -> Result<QuantileTable> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    QuantileTable::from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub table: QuantileTable,
    /// Mismatches accepted because of the override flag.
    pub warnings: Vec<String>,
}

/// Loads a table and checks it against the scan configuration. Any
/// mismatch is an error unless `allow_mismatch` is set, in which case the
/// mismatches are returned as warnings.
pub fn load_table_for(path: impl AsRef<Path>, system: &RegionSystem, allow_mismatch: bool) -> Result<LoadedTable> {
    let table = load_table(path)?;
    let warnings = check_table(&table, system, allow_mismatch)?;
    Ok(LoadedTable { table, warnings })
}

pub fn check_table(table: &QuantileTable, system: &RegionSystem, allow_mismatch: bool) -> Result<Vec<String>> {
    let mismatches = table.meta.mismatches(system);
    if mismatches.is_empty() || allow_mismatch {
        Ok(mismatches)
    } else {
        Err(Error::CalibrationMismatch(mismatches.join("; ")))
    }
}

/// A penalty constant and lower scale bound derived from a base system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub v: f64,
    pub min_size: usize,
}

fn check_budget(system: &RegionSystem, replicates: usize, budget: u128) -> Result<()> {
    let work = system.total() as u128 * replicates as u128;
    if work > budget {
        return Err(Error::Budget(format!(
            "{} grid points x {replicates} replicates exceeds the budget of {budget}",
            system.total()
        )));
    }
    Ok(())
}

fn check_variants(base: &RegionSystem, variants: &[Variant]) -> Result<()> {
    for var in variants {
        if var.min_size < base.min_size || !(var.v >= 1.0) {
            return Err(Error::domain(format!(
                "variant v={} r_n={} is not derivable from base r_n={}",
                var.v, var.min_size, base.min_size
            )));
        }
        if !matches!(base.scale_policy, ScalePolicy::All | ScalePolicy::Dyadic) && var.min_size != base.min_size {
            return Err(Error::domain("explicit scale lists cannot be re-bounded"));
        }
        base.clone().with_min_size(var.min_size)?.enumerate_scales()?;
    }
    Ok(())
}

/// Simulates `M_n` for several `(v, r_n)` variants of one base system on
/// shared noise. Each returned table equals what [`simulate_null`] gives
/// for the corresponding system with the same seed.
pub fn simulate_null_variants(
    base: &RegionSystem,
    variants: &[Variant],
    replicates: usize,
    seed: u64,
    budget: u128,
) -> Result<Vec<QuantileTable>> {
    if replicates < 100 {
        return Err(Error::domain(format!("at least 100 replicates are required, got {replicates}")));
    }
    sample_null_variants(base, variants, replicates, seed, budget)
}

/// [`simulate_null_variants`] without the minimum replicate count, for
/// studies of the null law itself rather than calibration.
pub fn sample_null_variants(
    base: &RegionSystem,
    variants: &[Variant],
    replicates: usize,
    seed: u64,
    budget: u128,
) -> Result<Vec<QuantileTable>> {
    if replicates == 0 {
        return Err(Error::domain("at least one replicate is required"));
    }
    check_budget(base, replicates, budget)?;
    check_variants(base, variants)?;
    let model = NefModel::Gaussian { sigma: 1.0 };
    let stats: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain::NULL_NOISE, i as u64);
            let noise = Field::standard_normal(base.d, base.n, &mut rng);
            let scanner = Scanner::new(&noise, &model, 0.0, base, Backend::Auto)?;
            let profile = ScaleProfile::from_scanner(&scanner)?;
            Ok(variants.iter().map(|var| profile.statistic(var.v, var.min_size)).collect())
        })
        .collect::<Result<_>>()?;
    variants
        .iter()
        .enumerate()
        .map(|(j, var)| {
            let system = base.clone().with_v(var.v)?.with_min_size(var.min_size)?;
            let meta = TableMeta::for_system(&system, replicates, seed);
            QuantileTable::new(meta, stats.iter().map(|s| s[j]).collect())
        })
        .collect()
}

/// Simulates `replicates` independent draws of `M_n` for `system`.
/// Replicate `i` uses substream `i` of `seed`.
pub fn simulate_null(system: &RegionSystem, replicates: usize, seed: u64) -> Result<QuantileTable> {
    simulate_null_with_budget(system, replicates, seed, DEFAULT_BUDGET)
}

pub fn simulate_null_with_budget(
    system: &RegionSystem,
    replicates: usize,
    seed: u64,
    budget: u128,
) -> Result<QuantileTable> {
    let variant = Variant { v: system.v, min_size: system.min_size };
    Ok(simulate_null_variants(system, &[variant], replicates, seed, budget)?.remove(0))
}

/// Simulates the scan statistic `T_n` itself on null data drawn from
/// `model` at `theta0`, for several `(v, r_n)` variants on shared data.
pub fn simulate_statistic_variants(
    model: &NefModel,
    theta0: f64,
    base: &RegionSystem,
    variants: &[Variant],
    replicates: usize,
    seed: u64,
    budget: u128,
) -> Result<Vec<QuantileTable>> {
    if replicates == 0 {
        return Err(Error::domain("at least one replicate is required"));
    }
    check_budget(base, replicates, budget)?;
    check_variants(base, variants)?;
    model.check_theta(theta0)?;
    let stats: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain::STATISTIC, i as u64);
            let field = Field::sample(model, theta0, base.d, base.n, &mut rng)?;
            let scanner = Scanner::new(&field, model, theta0, base, Backend::Auto)?;
            let profile = ScaleProfile::from_scanner(&scanner)?;
            Ok(variants.iter().map(|var| profile.statistic(var.v, var.min_size)).collect())
        })
        .collect::<Result<_>>()?;
    variants
        .iter()
        .enumerate()
        .map(|(j, var)| {
            let system = base.clone().with_v(var.v)?.with_min_size(var.min_size)?;
            let mut meta = TableMeta::for_system(&system, replicates, seed);
            meta.statistic = format!("T_n:{}:{}", model.name(), theta0);
            QuantileTable::new(meta, stats.iter().map(|s| s[j]).collect())
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(sample: Vec<f64>) -> QuantileTable {
        let sys = RegionSystem::new(RegionKind::Hypercubes, 1, 8).unwrap();
        let meta = TableMeta::for_system(&sys, sample.len(), 1);
        QuantileTable::new(meta, sample).unwrap()
    }

    #[test]
    fn order_statistic_rule() {
        let t = table(vec![4.0, 2.0, 1.0, 3.0]);
        assert_eq!(quantile(&t, 0.5).unwrap(), 2.0);
        // any alpha below 1/N selects the maximum, 1 - 1/N the minimum
        assert_eq!(quantile(&t, 0.2).unwrap(), 4.0);
        assert_eq!(quantile(&t, 0.75).unwrap(), 1.0);
        assert!(quantile(&t, 0.0).is_err());
        assert!(quantile(&t, 1.0).is_err());
        let big = table((0..10_000).map(|i| i as f64).collect());
        assert_eq!(quantile(&big, 0.1).unwrap(), 8999.0);
        assert_eq!(quantile(&big, 0.05).unwrap(), 9499.0);
        assert!(quantile(&big, 0.05).unwrap() >= quantile(&big, 0.10).unwrap());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bytes_and_text_round_trip() {
        let t = table(vec![0.25, -1.5, 3.0e-7, 2.0]);
        assert_eq!(QuantileTable::from_bytes(&t.to_bytes()).unwrap(), t);
        assert_eq!(QuantileTable::from_text(&t.to_text()).unwrap(), t);
        assert_eq!(QuantileTable::from_bytes(t.to_text().as_bytes()).unwrap(), t);
        let mut bad = t.to_bytes();
        bad[0] = b'X';
        assert!(matches!(QuantileTable::from_bytes(&bad), Err(Error::Format(_))));
        let truncated = &t.to_bytes()[..30];
        assert!(QuantileTable::from_bytes(truncated).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let sys = RegionSystem::new(RegionKind::Hypercubes, 2, 8).unwrap();
        let a = simulate_null(&sys, 100, 5).unwrap();
        let b = simulate_null(&sys, 100, 5).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = simulate_null(&sys, 100, 6).unwrap();
        assert_ne!(a.sample(), c.sample());
        assert!(simulate_null(&sys, 99, 5).is_err());
        assert!(matches!(simulate_null_with_budget(&sys, 100, 5, 1000), Err(Error::Budget(_))));
    }

    #[test]
    fn variants_match_direct_simulation() {
        let base = RegionSystem::with_params(RegionKind::Hypercubes, 2, 10, 1, 1.0, ScalePolicy::All).unwrap();
        let vars = [Variant { v: 1.0, min_size: 4 }, Variant { v: 3.0, min_size: 9 }];
        let tables = simulate_null_variants(&base, &vars, 100, 9, DEFAULT_BUDGET).unwrap();
        for (var, t) in vars.iter().zip(&tables) {
            let sys = base.clone().with_v(var.v).unwrap().with_min_size(var.min_size).unwrap();
            assert_eq!(t, &simulate_null(&sys, 100, 9).unwrap());
        }
        assert!(simulate_null_variants(&base.clone().with_min_size(4).unwrap(), &[Variant { v: 1.0, min_size: 1 }], 100, 9, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn mismatch_detection() {
        let sys = RegionSystem::new(RegionKind::Hypercubes, 2, 16).unwrap();
        let t = simulate_null(&sys, 100, 1).unwrap();
        assert!(check_table(&t, &sys, false).unwrap().is_empty());
        let other_n = RegionSystem::new(RegionKind::Hypercubes, 2, 32).unwrap();
        assert!(matches!(check_table(&t, &other_n, false), Err(Error::CalibrationMismatch(_))));
        let other_r = sys.clone().with_min_size(9).unwrap();
        let w = check_table(&t, &other_r, true).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("r_n"));
    }
}
