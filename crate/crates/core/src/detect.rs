//! The multiple test: every region whose penalized statistic exceeds the
//! calibrated quantile is reported. The family-wise error guarantee holds
//! for the full list ([`Mode::All`]); [`Mode::LocalMaxima`] reports a
//! subset and inherits it.

use serde::{Deserialize, Serialize};

use crate::calibrate::{check_table, QuantileTable, TableMeta};
use crate::error::{Error, Result};
use crate::nef::NefModel;
use crate::regions::{Region, RegionSystem};
use crate::scan::{Backend, Exceedance, Field, Scanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    All,
    /// Drops regions strictly dominated by a significant region containing them.
    LocalMaxima,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Mode::All),
            "local-maxima" => Ok(Mode::LocalMaxima),
            _ => Err(Error::domain(format!("unknown report mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significant {
    pub anchor: Vec<usize>,
    pub extent: Vec<usize>,
    pub stat: f64,
    pub penalized: f64,
    pub margin: f64,
}

impl Significant {
    pub fn region(&self) -> Region {
        Region { anchor: self.anchor.clone(), extent: self.extent.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub table: TableMeta,
    pub field_checksum: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alpha: f64,
    pub q: f64,
    pub mode: Mode,
    pub regions: Vec<Significant>,
    pub provenance: Provenance,
}

impl DetectionReport {
    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Runs the multiple test at level `alpha`. Fails with a calibration
/// mismatch unless the table was simulated for `system`; use
/// [`detect_with_override`] to accept a mismatched table.
pub fn detect(
    field: &Field,
    model: &NefModel,
    theta0: f64,
    system: &RegionSystem,
    table: &QuantileTable,
    alpha: f64,
    mode: Mode,
) -> Result<DetectionReport> {
    detect_with_override(field, model, theta0, system, table, alpha, mode, false)
}

#[allow(clippy::too_many_arguments)]
pub fn detect_with_override(
    field: &Field,
    model: &NefModel,
    theta0: f64,
    system: &RegionSystem,
    table: &QuantileTable,
    alpha: f64,
    mode: Mode,
    allow_mismatch: bool,
) -> Result<DetectionReport> {
    let warnings = check_table(table, system, allow_mismatch)?;
    let q = table.quantile(alpha)?;
    let scanner = Scanner::new(field, model, theta0, system, Backend::Auto)?;
    let mut hits = scanner.exceedances(q)?;
    if mode == Mode::LocalMaxima {
        hits = local_maxima(hits);
    }
    let regions = hits
        .into_iter()
        .map(|e| Significant {
            anchor: e.region.anchor,
            extent: e.region.extent,
            stat: e.lrt,
            penalized: e.penalized,
            margin: e.penalized - q,
        })
        .collect();
    Ok(DetectionReport {
        alpha,
        q,
        mode,
        regions,
        provenance: Provenance {
            table: table.meta.clone(),
            field_checksum: format!("{:016x}", field.checksum()),
            warnings,
        },
    })
}

/// Keeps the exceedances not strictly dominated by an exceedance that
/// contains them. Output stays in enumeration order.
fn local_maxima(hits: Vec<Exceedance>) -> Vec<Exceedance> {
    let mut order: Vec<usize> = (0..hits.len()).collect();
    order.sort_by(|&a, &b| hits[b].penalized.total_cmp(&hits[a].penalized).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let h = &hits[i];
        let dominated = kept
            .iter()
            .any(|&k| hits[k].penalized > h.penalized && hits[k].region.contains(&h.region));
        if !dominated {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let mut keep = vec![false; hits.len()];
    for k in kept {
        keep[k] = true;
    }
    hits.into_iter().zip(keep).filter(|(_, k)| *k).map(|(h, _)| h).collect()
}

/// True when every significant region meets the anomalous cells
/// (1-based multi-indices); a region disjoint from them is a false detection.
pub fn fwer_semantics_check(report: &DetectionReport, truth: &[Vec<usize>]) -> bool {
    report.regions.iter().all(|s| {
        let r = s.region();
        truth.iter().any(|p| r.contains_point(p))
    })
}
