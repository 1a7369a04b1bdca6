use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mscan::calibrate::{
    self, ks_distance, load_table_for, sample_null_variants, simulate_null_variants, simulate_statistic_variants, QuantileTable, Variant,
    DEFAULT_BUDGET,
};
use mscan::detect::{detect_with_override, Mode};
use mscan::power::{self, boundary_gap, centered_cube, power_study, AnomalySpec, PowerArm};
use mscan::regions::recommended_v;
use mscan::{MeanParam, NefModel, RegionKind, RegionSystem, ScalePolicy};

use crate::args::*;
use crate::grid::read_grid;

/// What a command printed and the exit status it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, exit_code: 0 }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match cli.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build()?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Power(a) => cmd_power(a),
        Command::SimulateNull(a) => cmd_simulate_null(a),
    }
}

/// Model and baseline; the baseline is given on the mean scale and
/// returned as a natural parameter.
pub fn resolve_model(m: &ModelArgs) -> Result<(NefModel, f64)> {
    let model = match m.model {
        ModelName::Gaussian => NefModel::gaussian(m.sigma)?,
        ModelName::Bernoulli => NefModel::Bernoulli,
        ModelName::Poisson => NefModel::Poisson,
    };
    let mean = m.theta0.unwrap_or(match m.model {
        ModelName::Gaussian => 0.0,
        ModelName::Bernoulli => 0.5,
        ModelName::Poisson => 1.0,
    });
    let theta0 = model.natural_from_mean(MeanParam::new(&model, mean)?);
    Ok((model, theta0))
}

fn kind_of(s: &SystemArgs) -> RegionKind {
    match s.system {
        SystemName::Cubes => RegionKind::Hypercubes,
        SystemName::Rects => RegionKind::Hyperrectangles,
    }
}

pub fn parse_v(s: &str, kind: RegionKind, d: usize) -> Result<f64> {
    if s.trim() == "auto" {
        return Ok(recommended_v(kind.family(), d, 0.0));
    }
    s.trim().parse::<f64>().with_context(|| format!("--v expects auto or a number, got '{s}'"))
}

pub fn build_system(s: &SystemArgs, d: usize, n: usize, rn: Option<usize>, v: &str) -> Result<RegionSystem> {
    let kind = kind_of(s);
    let rn = rn.unwrap_or(1usize << d.min(63));
    Ok(RegionSystem::with_params(kind, d, n, rn, parse_v(v, kind, d)?, ScalePolicy::parse(&s.scales, d)?)?)
}

fn write_table(table: &QuantileTable, path: &Path, format: TableFormat) -> Result<()> {
    match format {
        TableFormat::Bin => calibrate::save_table(table, path)?,
        TableFormat::Csv => std::fs::write(path, table.to_text())?,
    }
    Ok(())
}

fn table_summary(t: &QuantileTable) -> String {
    let m = &t.meta;
    let mut s = format!(
        "n={} d={} kind={} r_n={} v={} scales={} N={} seed={}",
        m.n,
        m.d,
        m.kind.as_str(),
        m.min_size,
        m.v,
        m.scale_policy,
        m.replicates,
        m.seed
    );
    for a in [0.01, 0.05, 0.1] {
        if let Ok(q) = t.quantile(a) {
            let _ = write!(s, " q({a})={q:.6}");
        }
    }
    s
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<Outcome> {
    let system = build_system(&a.system, a.d, a.n, a.rn, &a.v)?;
    let table = calibrate::simulate_null_with_budget(&system, a.reps, a.seed, a.budget.unwrap_or(DEFAULT_BUDGET))?;
    write_table(&table, &a.out, a.format)?;
    Ok(Outcome::ok(format!("{}\nwrote {}\n", table_summary(&table), a.out.display())))
}

pub fn cmd_scan(a: &ScanArgs) -> Result<Outcome> {
    let field = read_grid(&a.grid)?;
    let (model, theta0) = resolve_model(&a.model)?;
    let system = build_system(&a.system, field.dim(), field.side(), a.rn, &a.v)?;
    let table = match &a.table {
        Some(path) => load_table_for(path, &system, a.allow_mismatch)?.table,
        None => calibrate::simulate_null(&system, a.reps, a.seed)?,
    };
    let mode = match a.mode {
        ModeName::All => Mode::All,
        ModeName::LocalMaxima => Mode::LocalMaxima,
    };
    let report = detect_with_override(&field, &model, theta0, &system, &table, a.alpha, mode, a.allow_mismatch)?;
    let json = report.to_json();
    let mut out = String::new();
    for w in &report.provenance.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(
        out,
        "alpha={} q={:.6} significant={} detected={}",
        report.alpha,
        report.q,
        report.regions.len(),
        if report.is_empty() { "no" } else { "yes" }
    );
    match &a.out {
        Some(path) => {
            std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
            let _ = writeln!(out, "wrote {}", path.display());
        }
        None => {
            out.push_str(&json);
            out.push('\n');
        }
    }
    let exit_code = if a.exit_status && !report.is_empty() { 2 } else { 0 };
    Ok(Outcome { stdout: out, exit_code })
}

pub fn cmd_power(a: &PowerArgs) -> Result<Outcome> {
    let (model, theta0) = resolve_model(&a.model)?;
    let base = build_system(&a.system, a.d, a.n, a.rn, "1")?;
    let kind = base.kind;
    let variants: Vec<Variant> = a
        .v
        .iter()
        .map(|s| Ok(Variant { v: parse_v(s, kind, a.d)?, min_size: base.min_size }))
        .collect::<Result<_>>()?;
    let tables = simulate_null_variants(&base, &variants, a.cal_reps, a.seed, DEFAULT_BUDGET)?;
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for &h in &a.blocks {
        let block = centered_cube(h, a.d, a.n)?;
        let a_n = (h as f64 / a.n as f64).powi(a.d as i32);
        for &mean1 in &a.theta1 {
            let theta1 = model.natural_from_mean(MeanParam::new(&model, mean1)?);
            let anomaly = if theta1 == theta0 {
                AnomalySpec::null(&model, block.clone(), theta0, a.n)?
            } else {
                AnomalySpec::new(&model, block.clone(), theta0, theta1, a.n)?
            };
            let arms: Vec<PowerArm<'_>> = variants
                .iter()
                .zip(&tables)
                .flat_map(|(var, table)| a.alpha.iter().map(move |&alpha| PowerArm { variant: *var, table, alpha }))
                .collect();
            for est in power_study(&model, theta0, &anomaly, &base, &arms, a.reps, a.seed)? {
                let gap = if a_n < 1.0 {
                    boundary_gap(&model, theta0, theta1, a_n, a.n, a.d, est.config.v)?
                } else {
                    f64::NAN
                };
                gaps.push(gap);
                rows.push(est);
            }
        }
    }
    let mut csv = String::new();
    for (i, line) in power::to_csv(&rows).lines().enumerate() {
        if i == 0 {
            let _ = writeln!(csv, "{line},boundary_gap");
        } else {
            let _ = writeln!(csv, "{line},{}", gaps[i - 1]);
        }
    }
    Ok(Outcome::ok(match &a.out {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            format!("{} rows\nwrote {}\n", rows.len(), path.display())
        }
        None => csv,
    }))
}

/// Parses a power CSV back into header-keyed rows.
pub fn read_power_csv(text: &str) -> Result<Vec<std::collections::BTreeMap<String, String>>> {
    let mut lines = text.lines();
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => bail!("empty CSV"),
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != header.len() {
                bail!("row has {} cells, header has {}", cells.len(), header.len());
            }
            Ok(header.iter().zip(cells).map(|(k, v)| (k.to_string(), v.to_string())).collect())
        })
        .collect()
}

pub fn cmd_simulate_null(a: &SimulateNullArgs) -> Result<Outcome> {
    let (model, theta0) = resolve_model(&a.model)?;
    let rns = if a.rn.is_empty() { vec![1usize << a.d.min(63)] } else { a.rn.clone() };
    let budget = a.budget.unwrap_or(DEFAULT_BUDGET);
    let min_rn = *rns.iter().min().unwrap();
    let mut configs: Vec<(String, QuantileTable)> = Vec::new();
    for &n in &a.n {
        let base = build_system(&a.system, a.d, n, Some(min_rn), &a.v)?;
        let variants: Vec<Variant> = rns.iter().map(|&r| Variant { v: base.v, min_size: r }).collect();
        let tables = match a.statistic {
            Statistic::M => sample_null_variants(&base, &variants, a.reps, a.seed, budget)?,
            Statistic::T => simulate_statistic_variants(&model, theta0, &base, &variants, a.reps, a.seed, budget)?,
        };
        for (r, t) in rns.iter().zip(tables) {
            configs.push((format!("n{n}_r{r}"), t));
        }
    }
    let stat = match a.statistic {
        Statistic::M => "M",
        Statistic::T => "T",
    };
    let mut out = String::new();
    for (label, t) in &configs {
        let mean = t.sample().iter().sum::<f64>() / t.len() as f64;
        let _ = writeln!(out, "{stat} {label} N={} mean={mean:.6} {}", t.len(), table_summary(t));
    }
    let mut ks = String::from("a,b,ks\n");
    for i in 0..configs.len() {
        for j in i + 1..configs.len() {
            let k = ks_distance(configs[i].1.sample(), configs[j].1.sample());
            let _ = writeln!(ks, "{},{},{k}", configs[i].0, configs[j].0);
            let _ = writeln!(out, "ks({}, {}) = {k:.6}", configs[i].0, configs[j].0);
        }
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let ext = match a.format {
            TableFormat::Bin => "qt",
            TableFormat::Csv => "txt",
        };
        for (label, t) in &configs {
            write_table(t, &dir.join(format!("{stat}_{label}.{ext}")), a.format)?;
        }
        std::fs::write(dir.join("ks.csv"), ks)?;
        let _ = writeln!(out, "wrote {} samples and ks.csv to {}", configs.len(), dir.display());
    }
    Ok(Outcome::ok(out))
}
