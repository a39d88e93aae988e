//! Command-line front end: CSV ingestion, model fitting and export, simulation.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::em::{FitConfig, MixtureModel, PenaltyHyper, PenaltyTarget};
use crate::error::{Error, Result};
use crate::select::{adjusted_rand_index, cross_tabulate, sweep, Partition, ScoreRow, SweepFailure};
use crate::simgen::{generate, ScenarioKind, ScenarioSpec};

/// A column chosen by header name or by 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl FromStr for ColumnRef {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.parse::<usize>() {
            Ok(0) => Err("column positions start at 1".into()),
            Ok(i) => Ok(ColumnRef::Index(i)),
            Err(_) if s.is_empty() => Err("empty column reference".into()),
            Err(_) => Ok(ColumnRef::Name(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub has_header: bool,
    pub label_column: Option<ColumnRef>,
    pub id_column: Option<ColumnRef>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            label_column: None,
            id_column: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// True classes coded in order of first appearance.
    pub labels: Option<Partition>,
    /// Original label values, indexed by code.
    pub label_names: Vec<String>,
    pub ids: Option<Vec<String>>,
    /// Rows dropped because a cell was empty or `NA`.
    pub rejected_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn resolve(column: &ColumnRef, header: Option<&[String]>, width: usize) -> Result<usize> {
    let idx = match column {
        ColumnRef::Index(i) => *i - 1,
        ColumnRef::Name(name) => header
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| Error::InvalidConfig(format!("no column named {name:?}")))?,
    };
    if idx >= width {
        return Err(Error::InvalidConfig(format!("column {} is beyond the {width} columns", idx + 1)));
    }
    Ok(idx)
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    ingest_reader(fs::File::open(path)?, options)
}

/// Parses comma-separated numeric data. Rows with an empty or `NA` cell are
/// dropped and counted; any other unparseable cell is an error reporting its
/// 1-based data row and column.
pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Option<Vec<String>> = if options.has_header {
        match records.next() {
            Some(rec) => Some(rec?.iter().map(|s| s.trim().to_string()).collect()),
            None => return Err(Error::EmptyInput("the file is empty".into())),
        }
    } else {
        None
    };
    let rows: Vec<csv::StringRecord> = records.collect::<std::result::Result<_, _>>()?;
    let width = header.as_ref().map(|h| h.len()).or_else(|| rows.first().map(|r| r.len()));
    let width = match width {
        Some(w) if w > 0 => w,
        _ => return Err(Error::EmptyInput("the file has no columns".into())),
    };
    let label_idx = options
        .label_column
        .as_ref()
        .map(|c| resolve(c, header.as_deref(), width))
        .transpose()?;
    let id_idx = options.id_column.as_ref().map(|c| resolve(c, header.as_deref(), width)).transpose()?;
    let numeric: Vec<usize> = (0..width).filter(|&j| Some(j) != label_idx && Some(j) != id_idx).collect();
    if numeric.is_empty() {
        return Err(Error::EmptyInput("no numeric columns".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut ids = Vec::new();
    let mut rejected = 0;
    for (r, rec) in rows.iter().enumerate() {
        if numeric.iter().chain(label_idx.iter()).any(|&j| is_missing(&rec[j])) {
            rejected += 1;
            continue;
        }
        for &j in &numeric {
            let cell = rec[j].trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        if let Some(j) = label_idx {
            raw_labels.push(rec[j].trim().to_string());
        }
        if let Some(j) = id_idx {
            ids.push(rec[j].trim().to_string());
        }
    }
    let n = values.len() / numeric.len();
    if n == 0 {
        return Err(Error::EmptyInput("no complete data rows".into()));
    }
    let column_names = numeric
        .iter()
        .map(|&j| header.as_ref().map_or_else(|| format!("x{}", j + 1), |h| h[j].clone()))
        .collect();
    let (labels, label_names) = if label_idx.is_some() {
        let part = Partition::from_values(&raw_labels);
        let mut names = vec![String::new(); part.num_classes()];
        for (code, name) in part.labels().iter().zip(&raw_labels) {
            names[*code] = name.clone();
        }
        (Some(part), names)
    } else {
        (None, Vec::new())
    };
    Ok(Dataset {
        matrix: DMatrix::from_row_slice(n, numeric.len(), &values),
        column_names,
        labels,
        label_names,
        ids: id_idx.map(|_| ids),
        rejected_rows: rejected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub g_min: usize,
    pub g_max: usize,
    pub hyper: PenaltyHyper,
    pub eps: f64,
    pub max_iter: usize,
    pub starts: usize,
    pub seed: u64,
    pub standardize: bool,
    pub cutoff: f64,
    pub penalty_target: PenaltyTarget,
    pub omega_floor: f64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            g_min: 1,
            g_max: 6,
            hyper: PenaltyHyper::default(),
            eps: 1e-5,
            max_iter: 1000,
            starts: 5,
            seed: 0,
            standardize: false,
            cutoff: crate::select::DEFAULT_CUTOFF,
            penalty_target: PenaltyTarget::Raw,
            omega_floor: 0.0,
            out_dir: out_dir.into(),
        }
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig {
            hyper: self.hyper,
            eps: self.eps,
            max_iter: self.max_iter,
            seed: self.seed,
            penalty_target: self.penalty_target,
            omega_floor: self.omega_floor,
            ..FitConfig::default()
        }
    }
}

type Rows = Vec<Vec<f64>>;

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn correlation(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..sigma.nrows()).map(|i| sigma[(i, i)].sqrt()).collect();
    DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            sigma[(i, j)] / (d[i] * d[j])
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub proportion: f64,
    pub lambda: f64,
    pub omega: f64,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Rows,
    pub correlation: Rows,
    pub concentration: Rows,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub ari: f64,
    /// Rows: true classes in order of `class_names`; columns: clusters.
    pub cross_tab: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDocument {
    pub n: usize,
    pub p: usize,
    pub columns: Vec<String>,
    pub rejected_rows: usize,
    pub standardized: bool,
    pub shape: f64,
    pub rate: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub starts: usize,
    pub seed: u64,
    pub cutoff: f64,
    pub penalty_target: PenaltyTarget,
    pub omega_floor: f64,
    pub scores: Vec<ScoreRow>,
    pub failures: Vec<SweepFailure>,
    pub selected_g: usize,
    pub bic: f64,
    pub effective_params: usize,
    pub effective_params_full: usize,
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub components: Vec<ComponentReport>,
    /// 1-based cluster of each retained row.
    pub assignments: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

/// Per-column mean and sample standard deviation.
fn column_scales(x: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = x.nrows() as f64;
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
    let sd = DVector::from_fn(x.ncols(), |j, _| {
        (x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    });
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Domain(format!("column {} is constant and cannot be standardized", j + 1)));
    }
    Ok((mean, sd))
}

fn component_reports(model: &MixtureModel, scales: Option<&(DVector<f64>, DVector<f64>)>) -> Vec<ComponentReport> {
    model
        .components()
        .iter()
        .enumerate()
        .map(|(g, c)| {
            let (mu, alpha, sigma, conc) = match scales {
                None => (c.mu().clone(), c.alpha().clone(), c.sigma().clone(), c.concentration().clone()),
                Some((m, s)) => {
                    let d = DMatrix::from_diagonal(s);
                    let d_inv = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
                    (
                        m + c.mu().component_mul(s),
                        c.alpha().component_mul(s),
                        &d * c.sigma() * &d,
                        &d_inv * c.concentration() * &d_inv,
                    )
                }
            };
            ComponentReport {
                proportion: model.proportions()[g],
                lambda: model.lambda()[g],
                omega: c.omega(),
                gamma: c.gamma(),
                mu: mu.iter().copied().collect(),
                alpha: alpha.iter().copied().collect(),
                correlation: rows_of(&correlation(&sigma)),
                sigma: rows_of(&sigma),
                concentration: rows_of(&conc),
            }
        })
        .collect()
}

fn write_grid(path: &Path, header: &[String], rows: &Rows) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the model-selection sweep and writes `result.json`, `scores.csv`,
/// `assignments.csv` and per-component covariance, correlation,
/// concentration and support grids into `config.out_dir`.
pub fn run_fit(dataset: &Dataset, config: &RunConfig) -> Result<FitDocument> {
    let (n, p) = dataset.matrix.shape();
    if n < 2 || p < 1 {
        return Err(Error::EmptyInput(format!("need at least two rows and one column, got {n} x {p}")));
    }
    if config.g_min == 0 || config.g_min > config.g_max {
        return Err(Error::InvalidConfig(format!(
            "invalid component range {}..={}",
            config.g_min, config.g_max
        )));
    }
    if !(config.cutoff >= 0.0) {
        return Err(Error::InvalidConfig("cutoff must be nonnegative".into()));
    }
    let scales = if config.standardize { Some(column_scales(&dataset.matrix)?) } else { None };
    let data = match &scales {
        Some((m, s)) => DMatrix::from_fn(n, p, |i, j| (dataset.matrix[(i, j)] - m[j]) / s[j]),
        None => dataset.matrix.clone(),
    };
    let g_range: Vec<usize> = (config.g_min..=config.g_max).collect();
    let result = sweep(&data, &g_range, &config.fit_config(), config.starts, config.cutoff)?;
    let best = result.best();
    let report = &best.report;
    let assignments: Vec<usize> = report.assignments.iter().map(|g| g + 1).collect();
    let evaluation = match &dataset.labels {
        Some(truth) => {
            let fitted = Partition::new(report.assignments.clone());
            Some(Evaluation {
                ari: adjusted_rand_index(truth, &fitted)?,
                cross_tab: cross_tabulate(truth, &fitted)?,
                class_names: dataset.label_names.clone(),
            })
        }
        None => None,
    };
    let doc = FitDocument {
        n,
        p,
        columns: dataset.column_names.clone(),
        rejected_rows: dataset.rejected_rows,
        standardized: config.standardize,
        shape: config.hyper.s,
        rate: config.hyper.r,
        eps: config.eps,
        max_iter: config.max_iter,
        starts: config.starts,
        seed: config.seed,
        cutoff: config.cutoff,
        penalty_target: config.penalty_target,
        omega_floor: config.omega_floor,
        scores: result.table.iter().map(|s| s.row()).collect(),
        failures: result.failures.clone(),
        selected_g: best.g,
        bic: best.bic,
        effective_params: best.effective_params,
        effective_params_full: best.effective_params_full,
        converged: report.converged,
        iterations: report.iterations,
        loglik_trace: report.loglik_trace.clone(),
        components: component_reports(&report.model, scales.as_ref()),
        assignments,
        ids: dataset.ids.clone(),
        evaluation,
    };
    write_fit_outputs(&doc, report.cache.z.clone(), &config.out_dir, config.cutoff)?;
    Ok(doc)
}

fn write_fit_outputs(doc: &FitDocument, z: DMatrix<f64>, dir: &Path, cutoff: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(doc)?)?;

    let mut w = csv::Writer::from_path(dir.join("scores.csv"))?;
    w.write_record([
        "g",
        "bic",
        "effective_params",
        "effective_params_full",
        "loglik",
        "penalized_loglik",
        "converged",
        "iterations",
    ])?;
    for s in &doc.scores {
        w.write_record([
            s.g.to_string(),
            s.bic.to_string(),
            s.effective_params.to_string(),
            s.effective_params_full.to_string(),
            s.loglik.to_string(),
            s.penalized_loglik.to_string(),
            s.converged.to_string(),
            s.iterations.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("assignments.csv"))?;
    let mut header = vec!["row".to_string()];
    if doc.ids.is_some() {
        header.push("id".into());
    }
    header.push("cluster".into());
    header.extend((1..=z.ncols()).map(|g| format!("z{g}")));
    w.write_record(&header)?;
    for (i, cluster) in doc.assignments.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        if let Some(ids) = &doc.ids {
            rec.push(ids[i].clone());
        }
        rec.push(cluster.to_string());
        rec.extend(z.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    for (g, comp) in doc.components.iter().enumerate() {
        let stem = format!("component{}", g + 1);
        write_grid(&dir.join(format!("{stem}_covariance.csv")), &doc.columns, &comp.sigma)?;
        write_grid(&dir.join(format!("{stem}_correlation.csv")), &doc.columns, &comp.correlation)?;
        write_grid(&dir.join(format!("{stem}_concentration.csv")), &doc.columns, &comp.concentration)?;
        let support: Rows = comp
            .concentration
            .iter()
            .map(|r| r.iter().map(|&v| if v.abs() <= cutoff { 0.0 } else { v }).collect())
            .collect();
        write_grid(&dir.join(format!("{stem}_support.csv")), &doc.columns, &support)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct TruthComponentDoc {
    mu: Vec<f64>,
    alpha: Vec<f64>,
    omega: Option<f64>,
    gamma: Option<f64>,
    sigma: Rows,
    concentration: Rows,
}

#[derive(Debug, Clone, Serialize)]
struct TruthDoc {
    spec: ScenarioSpec,
    proportions: Vec<f64>,
    components: Vec<TruthComponentDoc>,
}

/// Writes `data.csv` (columns `x1..xp` and `class`), `labels.csv` and
/// `truth.json`. Classes are numbered from 1.
pub fn run_simulate(spec: &ScenarioSpec, out_dir: &Path) -> Result<()> {
    let scenario = generate(spec)?;
    fs::create_dir_all(out_dir)?;
    let p = spec.p;
    let mut w = csv::Writer::from_path(out_dir.join("data.csv"))?;
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("class".into());
    w.write_record(&header)?;
    for (i, &label) in scenario.labels.labels().iter().enumerate() {
        let mut rec: Vec<String> = scenario.data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push((label + 1).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("labels.csv"))?;
    w.write_record(["class"])?;
    for &label in scenario.labels.labels() {
        w.write_record([(label + 1).to_string()])?;
    }
    w.flush()?;

    let truth = TruthDoc {
        spec: scenario.truth.spec,
        proportions: scenario.truth.proportions.clone(),
        components: scenario
            .truth
            .components
            .iter()
            .map(|c| TruthComponentDoc {
                mu: c.mu.iter().copied().collect(),
                alpha: c.alpha.iter().copied().collect(),
                omega: c.omega,
                gamma: c.gamma,
                sigma: rows_of(&c.sigma),
                concentration: rows_of(&c.concentration),
            })
            .collect(),
    };
    fs::write(out_dir.join("truth.json"), serde_json::to_string_pretty(&truth)?)?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "ghdgls", version, about = "Penalised mixtures of generalized hyperbolic distributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit models over a range of component counts and export the best by BIC.
    Fit(FitArgs),
    /// Generate a synthetic dataset with known structure.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file, one observation per row.
    #[arg(long)]
    pub data: PathBuf,
    /// The first line holds data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// Column of true classes, by name or 1-based position.
    #[arg(long)]
    pub labels_col: Option<ColumnRef>,
    /// Column of row identifiers, by name or 1-based position.
    #[arg(long)]
    pub id_col: Option<ColumnRef>,
    /// Smallest number of components tried.
    #[arg(long, default_value_t = 1)]
    pub gmin: usize,
    /// Largest number of components tried.
    #[arg(long, default_value_t = 6)]
    pub gmax: usize,
    /// Gamma hyperprior shape.
    #[arg(long, default_value_t = 1.0)]
    pub shape: f64,
    /// Gamma hyperprior rate.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Aitken stopping threshold.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// EM iteration limit per start.
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Seeded starts per component count; the best penalised fit is kept.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Base seed for initialisation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit on z-scored columns and report parameters in original units.
    #[arg(long)]
    pub standardize: bool,
    /// Concentration entries at or below this magnitude count as zero.
    #[arg(long, default_value_t = 1e-5)]
    pub cutoff: f64,
    /// Matrix the sparsity prior acts on.
    #[arg(long, value_enum, default_value_t = TargetArg::Raw)]
    pub penalty_target: TargetArg,
    /// Lower bound on each component's ω; 0 leaves it unbounded.
    #[arg(long, default_value_t = 0.0)]
    pub omega_floor: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    /// The concentration matrix as parametrised.
    Raw,
    /// The concentration rescaled by the geometric mean of the mixing variable.
    GeometricScale,
}

impl From<TargetArg> for PenaltyTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Raw => PenaltyTarget::Raw,
            TargetArg::GeometricScale => PenaltyTarget::GeometricScale,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Spherical,
    BlockPattern1,
    BlockPattern2,
    GaussianBlocks,
}

impl From<KindArg> for ScenarioKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Spherical => ScenarioKind::Spherical,
            KindArg::BlockPattern1 => ScenarioKind::BlockPattern1,
            KindArg::BlockPattern2 => ScenarioKind::BlockPattern2,
            KindArg::GaussianBlocks => ScenarioKind::GaussianBlocks,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Covariance and mixing design.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Number of variables.
    #[arg(long)]
    pub p: usize,
    /// Number of components.
    #[arg(long)]
    pub g: usize,
    /// Observations per component.
    #[arg(long)]
    pub ng: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Distance between consecutive component locations.
    #[arg(long, default_value_t = 5.0)]
    pub separation: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let dataset = ingest_csv(
                &a.data,
                &IngestOptions {
                    has_header: !a.no_header,
                    label_column: a.labels_col,
                    id_column: a.id_col,
                },
            )?;
            if dataset.rejected_rows > 0 {
                log::warn!("{} rows with missing values were skipped", dataset.rejected_rows);
            }
            let config = RunConfig {
                g_min: a.gmin,
                g_max: a.gmax,
                hyper: PenaltyHyper::new(a.shape, a.rate)?,
                eps: a.eps,
                max_iter: a.max_iter,
                starts: a.starts,
                seed: a.seed,
                standardize: a.standardize,
                cutoff: a.cutoff,
                penalty_target: a.penalty_target.into(),
                omega_floor: a.omega_floor,
                out_dir: a.out,
            };
            let doc = run_fit(&dataset, &config)?;
            print!("selected G = {} (BIC {})", doc.selected_g, doc.bic);
            if let Some(ev) = &doc.evaluation {
                print!(", ARI {:.4}", ev.ari);
            }
            println!();
            Ok(())
        }
        Command::Simulate(a) => {
            let spec = ScenarioSpec::new(a.kind.into(), a.p, a.g, a.ng, a.seed).with_separation(a.separation);
            run_simulate(&spec, &a.out)
        }
    }
}

/// Parses arguments, runs the command and maps failures to a nonzero exit status.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, options: &IngestOptions) -> Result<Dataset> {
        ingest_reader(text.as_bytes(), options)
    }

    #[test]
    fn parses_small_table_with_header() {
        let d = ingest("a,b\n1,2\n3,4.5\n-1e-3,0\n", &IngestOptions::default()).unwrap();
        assert_eq!(d.matrix.shape(), (3, 2));
        assert_eq!(d.column_names, vec!["a", "b"]);
        assert_eq!(d.matrix[(2, 0)], -1e-3);
    }

    #[test]
    fn reports_location_of_bad_cell() {
        let err = ingest("a,b,c\n1,2,3\n4,5,oops\n", &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("row 2, column 3"), "{err}");
    }

    #[test]
    fn extracts_labels_and_ids() {
        let opts = IngestOptions {
            has_header: true,
            label_column: Some("class".parse().unwrap()),
            id_column: Some(ColumnRef::Index(1)),
        };
        let d = ingest("id,x,class,y\nr1,1,M,2\nr2,3,B,4\nr3,5,M,6\n", &opts).unwrap();
        assert_eq!(d.matrix.shape(), (3, 2));
        assert_eq!(d.labels.unwrap().labels(), &[0, 1, 0]);
        assert_eq!(d.label_names, vec!["M", "B"]);
        assert_eq!(d.ids.unwrap(), vec!["r1", "r2", "r3"]);
        assert_eq!(d.column_names, vec!["x", "y"]);
    }

    #[test]
    fn skips_rows_with_missing_cells() {
        let d = ingest("a,b\n1,2\n,3\nNA,4\n5,6\n", &IngestOptions::default()).unwrap();
        assert_eq!(d.matrix.nrows(), 2);
        assert_eq!(d.rejected_rows, 2);
    }

    #[test]
    fn headerless_input_and_empty_input() {
        let opts = IngestOptions {
            has_header: false,
            ..IngestOptions::default()
        };
        let d = ingest("1,2\n3,4\n", &opts).unwrap();
        assert_eq!(d.matrix.nrows(), 2);
        assert_eq!(d.column_names, vec!["x1", "x2"]);
        assert!(matches!(ingest("", &IngestOptions::default()), Err(Error::EmptyInput(_))));
        assert!(matches!(ingest("a,b\n", &IngestOptions::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn column_references() {
        assert_eq!("3".parse::<ColumnRef>().unwrap(), ColumnRef::Index(3));
        assert_eq!("label".parse::<ColumnRef>().unwrap(), ColumnRef::Name("label".into()));
        assert!("0".parse::<ColumnRef>().is_err());
        let opts = IngestOptions {
            label_column: Some(ColumnRef::Name("missing".into())),
            ..IngestOptions::default()
        };
        assert!(ingest("a,b\n1,2\n", &opts).is_err());
    }

    #[test]
    fn standardised_parameters_map_back_to_original_units() {
        use crate::ghd::GhdComponent;
        let c = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
        let comp = GhdComponent::with_concentration(
            DVector::from_column_slice(&[0.5, -1.0]),
            DVector::from_column_slice(&[0.2, 0.3]),
            c.clone(),
            1.5,
            -0.5,
        )
        .unwrap();
        let model = MixtureModel::new(vec![comp.clone()], vec![1.0], vec![1.0]).unwrap();
        let m = DVector::from_column_slice(&[10.0, -3.0]);
        let s = DVector::from_column_slice(&[2.0, 0.5]);
        let r = &component_reports(&model, Some(&(m, s)))[0];
        assert_eq!(r.mu, vec![11.0, -3.5]);
        assert_eq!(r.alpha, vec![0.4, 0.15]);
        let sigma = DMatrix::from_fn(2, 2, |i, j| r.sigma[i][j]);
        let conc = DMatrix::from_fn(2, 2, |i, j| r.concentration[i][j]);
        assert!((sigma * conc - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(r.concentration[0][1], -0.5 / (2.0 * 0.5));
        let unscaled = comp.sigma()[(0, 1)] / (comp.sigma()[(0, 0)] * comp.sigma()[(1, 1)]).sqrt();
        assert!((r.correlation[0][1] - unscaled).abs() < 1e-14);
    }

    #[test]
    fn correlation_has_unit_diagonal() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        let r = correlation(&s);
        assert_eq!(r[(0, 0)], 1.0);
        assert!((r[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
    }
}
