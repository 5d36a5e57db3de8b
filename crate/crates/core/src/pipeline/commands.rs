//! The simulate, run, evaluate and compare commands, plus Monte-Carlo evaluation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    dataset_fingerprint, evaluate_run, final_errors, read_run_record, run_filter, write_report, write_run_record, Config,
    CovHealth, EvalReport, Init, PipelineError, RunConfig, RunRecord,
};
use crate::kio::FilterVariant;
use crate::sim::{read_dataset, simulate, write_dataset, Dataset, GaitConfig};

pub fn load_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    read_dataset(path).map_err(|e| match e {
        crate::sim::SimError::Parse { line, message } => PipelineError::Parse { path: path.display().to_string(), line, message },
        crate::sim::SimError::Io(source) => PipelineError::io(path, source),
        other => other.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub path: PathBuf,
    pub ticks: usize,
    pub duration: f64,
    pub rate: f64,
    pub contact_ratio_lf: f64,
    pub contact_ratio_rf: f64,
    pub measurements: usize,
}

impl DatasetSummary {
    pub fn of(path: &Path, ds: &Dataset) -> Self {
        let (lf, rf) = ds.contact_ratio();
        DatasetSummary {
            path: path.to_path_buf(),
            ticks: ds.ticks.len(),
            duration: ds.duration(),
            rate: ds.header.config.rate,
            contact_ratio_lf: lf,
            contact_ratio_rf: rf,
            measurements: ds.ticks.iter().map(|t| t.meas.len()).sum(),
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset       {}", self.path.display())?;
        writeln!(f, "ticks         {}", self.ticks)?;
        writeln!(f, "duration      {:.3} s at {} Hz", self.duration, self.rate)?;
        writeln!(f, "contact ratio lf {:.3}, rf {:.3}", self.contact_ratio_lf, self.contact_ratio_rf)?;
        write!(f, "measurements  {}", self.measurements)
    }
}

/// Simulates the configured gait and writes the dataset to `output`.
pub fn cmd_simulate(cfg: &Config, output: &Path) -> Result<DatasetSummary, PipelineError> {
    cfg.validate()?;
    let ds = simulate(&cfg.gait_config())?;
    write_dataset(output, &ds).map_err(|e| match e {
        crate::sim::SimError::Io(source) => PipelineError::io(output, source),
        other => other.into(),
    })?;
    Ok(DatasetSummary::of(output, &ds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub variant: FilterVariant,
    pub output: PathBuf,
    pub ticks: usize,
    pub final_position_error: f64,
    pub final_orientation_error: f64,
    pub health: CovHealth,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant        {}", self.variant)?;
        writeln!(f, "record         {}", self.output.display())?;
        writeln!(f, "ticks          {}", self.ticks)?;
        writeln!(f, "final position error    {:.3e} m", self.final_position_error)?;
        writeln!(f, "final orientation error {:.3e} rad", self.final_orientation_error)?;
        write!(
            f,
            "covariance     max asymmetry {:.1e}, {}",
            self.health.max_asymmetry,
            match self.health.first_unhealthy {
                None => "healthy".to_string(),
                Some(k) => format!("unhealthy from tick {k}"),
            }
        )
    }
}

/// Runs one variant over a dataset file and writes its run record.
pub fn cmd_run(rc: &RunConfig) -> Result<RunSummary, PipelineError> {
    let ds = load_dataset(&rc.dataset)?;
    let init = if rc.exact_init { Init::Exact } else { Init::Sampled { seed: rc.seed } };
    let run = run_filter(&ds, rc.variant, &rc.noise, init)?;
    let seed = (!rc.exact_init).then_some(rc.seed);
    write_run_record(&rc.output, &RunRecord::new(&run, &ds, seed, rc.noise, rc.full_covariance))?;
    let (pos, rot) = final_errors(&ds, &run);
    Ok(RunSummary {
        variant: rc.variant,
        output: rc.output.clone(),
        ticks: run.ticks.len(),
        final_position_error: pos,
        final_orientation_error: rot,
        health: run.health,
    })
}

fn check_fingerprint(path: &Path, rec: &RunRecord, sha: &str) -> Result<(), PipelineError> {
    if rec.header.dataset_sha256 != sha {
        return Err(PipelineError::DatasetMismatch(format!(
            "{} was produced from dataset {}, not {}",
            path.display(),
            &rec.header.dataset_sha256[..12.min(rec.header.dataset_sha256.len())],
            &sha[..12]
        )));
    }
    Ok(())
}

/// Scores a run record against its dataset; optionally writes the report file.
pub fn cmd_evaluate(
    record: &Path,
    dataset: &Path,
    quantile: f64,
    window: f64,
    output: Option<&Path>,
) -> Result<EvalReport, PipelineError> {
    let ds = load_dataset(dataset)?;
    let rec = read_run_record(record)?;
    let sha = dataset_fingerprint(&ds);
    check_fingerprint(record, &rec, &sha)?;
    let report = evaluate_run(&ds, &rec.to_run(), quantile, window)?;
    if let Some(out) = output {
        write_report(out, "evaluation", &sha, std::slice::from_ref(&report))?;
    }
    Ok(report)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tr, c) = (&self.trajectory, &self.consistency);
        writeln!(f, "variant  {}", self.variant)?;
        writeln!(f, "ATE      {:.4} m, {:.4} rad", tr.ate_pos_rmse, tr.ate_rot_rmse)?;
        writeln!(f, "RPE      {:.4} m, {:.4} rad per {} s", tr.rpe_pos, tr.rpe_rot, tr.window)?;
        writeln!(f, "{:.0}% envelope violations (z = {:.4}):", 100.0 * c.quantile, c.z)?;
        for (name, axes) in [("position", c.position), ("orientation", c.orientation), ("velocity", c.velocity)] {
            writeln!(f, "  {name:<12} x {:.4}  y {:.4}  z {:.4}", axes[0], axes[1], axes[2])?;
        }
        write!(f, "mean NEES (3 dof):")?;
        for b in &c.nees {
            write!(f, "\n  {:<15} {:>10.3}", b.block, b.mean)?;
            if b.skipped > 0 {
                write!(f, "  ({} ticks skipped)", b.skipped)?;
            }
        }
        Ok(())
    }
}

/// Column a comparison table can be sorted by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Variant,
    AtePos,
    AteRot,
    RpePos,
    RpeRot,
    VelViolation,
    PosViolation,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Variant,
        Metric::AtePos,
        Metric::AteRot,
        Metric::RpePos,
        Metric::RpeRot,
        Metric::VelViolation,
        Metric::PosViolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Variant => "variant",
            Metric::AtePos => "ate-pos",
            Metric::AteRot => "ate-rot",
            Metric::RpePos => "rpe-pos",
            Metric::RpeRot => "rpe-rot",
            Metric::VelViolation => "vel-violation",
            Metric::PosViolation => "pos-violation",
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Metric::ALL.into_iter().find(|m| m.name() == key).ok_or_else(|| {
            let names: Vec<_> = Metric::ALL.iter().map(|m| m.name()).collect();
            format!("unknown metric `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: FilterVariant,
    pub record: String,
    pub ate_pos: f64,
    pub ate_rot: f64,
    pub rpe_pos: f64,
    pub rpe_rot: f64,
    pub vel_violation: f64,
    pub pos_violation: f64,
}

impl ComparisonRow {
    pub fn from_report(record: &str, r: &EvalReport) -> Self {
        ComparisonRow {
            variant: r.variant,
            record: record.to_string(),
            ate_pos: r.trajectory.ate_pos_rmse,
            ate_rot: r.trajectory.ate_rot_rmse,
            rpe_pos: r.trajectory.rpe_pos,
            rpe_rot: r.trajectory.rpe_rot,
            vel_violation: r.consistency.mean_velocity_violation(),
            pos_violation: r.consistency.mean_position_violation(),
        }
    }

    fn value(&self, m: Metric) -> f64 {
        match m {
            Metric::Variant => FilterVariant::ALL.iter().position(|v| *v == self.variant).unwrap_or(0) as f64,
            Metric::AtePos => self.ate_pos,
            Metric::AteRot => self.ate_rot,
            Metric::RpePos => self.rpe_pos,
            Metric::RpeRot => self.rpe_rot,
            Metric::VelViolation => self.vel_violation,
            Metric::PosViolation => self.pos_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub sorted_by: Metric,
}

impl ComparisonTable {
    pub fn new(mut rows: Vec<ComparisonRow>, sort_by: Metric) -> Self {
        rows.sort_by(|a, b| a.value(sort_by).total_cmp(&b.value(sort_by)));
        ComparisonTable { rows, sorted_by: sort_by }
    }

    fn row(&self, v: FilterVariant) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Whether CODILIGENT-KIO-RIE's velocity violation fraction is at most
    /// DILIGENT-KIO's; `None` unless both are in the table.
    pub fn rie_no_more_overconfident(&self) -> Option<bool> {
        let rie = self.row(FilterVariant::CodiligentKioRie)?;
        let dk = self.row(FilterVariant::DiligentKio)?;
        Some(rie.vel_violation <= dk.vel_violation)
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "variant", "ATE m", "ATE rad", "RPE m", "RPE rad", "vel viol", "pos viol"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<20} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                r.variant.name(),
                r.ate_pos,
                r.ate_rot,
                r.rpe_pos,
                r.rpe_rot,
                r.vel_violation,
                r.pos_violation
            )?;
        }
        write!(f, "sorted by {}", self.sorted_by.name())?;
        if let Some(ok) = self.rie_no_more_overconfident() {
            write!(
                f,
                "\ncodiligent-kio-rie velocity violation <= diligent-kio: {}",
                if ok { "yes" } else { "no" }
            )?;
        }
        Ok(())
    }
}

/// Compares run records that share one dataset.
pub fn cmd_compare(
    records: &[PathBuf],
    dataset: &Path,
    quantile: f64,
    window: f64,
    sort_by: Metric,
    output: Option<&Path>,
) -> Result<ComparisonTable, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::config("records", "at least one run record is required".into()));
    }
    let ds = load_dataset(dataset)?;
    let sha = dataset_fingerprint(&ds);
    let mut loaded = Vec::with_capacity(records.len());
    for path in records {
        loaded.push((path, read_run_record(path)?));
    }
    let first = &loaded[0].1.header.dataset_sha256;
    if let Some((p, _)) = loaded.iter().find(|(_, r)| &r.header.dataset_sha256 != first) {
        return Err(PipelineError::DatasetMismatch(format!(
            "{} and {} were produced from different datasets",
            loaded[0].0.display(),
            p.display()
        )));
    }
    let mut rows = Vec::with_capacity(loaded.len());
    for (path, rec) in &loaded {
        check_fingerprint(path, rec, &sha)?;
        let report = evaluate_run(&ds, &rec.to_run(), quantile, window)?;
        rows.push(ComparisonRow::from_report(&path.display().to_string(), &report));
    }
    let table = ComparisonTable::new(rows, sort_by);
    if let Some(out) = output {
        write_report(out, "comparison", &sha, &table.rows)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Stat { mean, std: var.sqrt() }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// One variant on one Monte-Carlo repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub run: usize,
    pub seed: u64,
    pub report: EvalReport,
    pub health: CovHealth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub variant: FilterVariant,
    pub runs: usize,
    pub vel_violation: Stat,
    pub pos_violation: Stat,
    pub pos_vel_violation: Stat,
    pub ate_pos: Stat,
    pub ate_rot: Stat,
    pub rpe_pos: Stat,
    pub rpe_rot: Stat,
    /// Runs with at least one unhealthy covariance.
    pub unhealthy_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub runs: Vec<McRun>,
    pub summary: Vec<McSummary>,
}

impl fmt::Display for MonteCarlo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.summary.first().map_or(0, |s| s.runs);
        writeln!(f, "Monte-Carlo over {n} runs (mean ± std)")?;
        writeln!(
            f,
            "{:<20} {:>17} {:>17} {:>17} {:>17} {:>9}",
            "variant", "vel viol", "pos viol", "ATE m", "RPE m", "unhealthy"
        )?;
        for s in &self.summary {
            writeln!(
                f,
                "{:<20} {:>17} {:>17} {:>17} {:>17} {:>9}",
                s.variant.name(),
                s.vel_violation.to_string(),
                s.pos_violation.to_string(),
                s.ate_pos.to_string(),
                s.rpe_pos.to_string(),
                s.unhealthy_runs
            )?;
        }
        Ok(())
    }
}

/// Repeats simulate → run → evaluate `runs` times. Repetition `i` uses seed
/// `base_seed + i` for both the sensors and the sampled prior. Runs execute
/// in parallel; results are ordered by run index.
pub fn monte_carlo(
    gait: &GaitConfig,
    variants: &[FilterVariant],
    runs: usize,
    base_seed: u64,
    quantile: f64,
    window: f64,
) -> Result<MonteCarlo, PipelineError> {
    if runs == 0 {
        return Err(PipelineError::config("runs", "must be at least 1".into()));
    }
    gait.validate()?;
    let per_run: Vec<Result<Vec<McRun>, PipelineError>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let ds = simulate(&GaitConfig { seed, ..gait.clone() })?;
            variants
                .iter()
                .map(|&v| {
                    let run = run_filter(&ds, v, &gait.noise, Init::Sampled { seed })?;
                    let report = evaluate_run(&ds, &run, quantile, window)?;
                    Ok(McRun { run: i, seed, report, health: run.health })
                })
                .collect()
        })
        .collect();
    let mut all = Vec::with_capacity(runs * variants.len());
    for r in per_run {
        all.extend(r?);
    }
    let summary = variants
        .iter()
        .map(|&v| {
            let rs: Vec<&McRun> = all.iter().filter(|r| r.report.variant == v).collect();
            let stat = |f: &dyn Fn(&EvalReport) -> f64| Stat::of(&rs.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
            McSummary {
                variant: v,
                runs: rs.len(),
                vel_violation: stat(&|r| r.consistency.mean_velocity_violation()),
                pos_violation: stat(&|r| r.consistency.mean_position_violation()),
                pos_vel_violation: stat(&|r| r.consistency.mean_pos_vel_violation()),
                ate_pos: stat(&|r| r.trajectory.ate_pos_rmse),
                ate_rot: stat(&|r| r.trajectory.ate_rot_rmse),
                rpe_pos: stat(&|r| r.trajectory.rpe_pos),
                rpe_rot: stat(&|r| r.trajectory.rpe_rot),
                unhealthy_runs: rs.iter().filter(|r| !r.health.healthy()).count(),
            }
        })
        .collect();
    Ok(MonteCarlo { runs: all, summary })
}

/// Monte-Carlo evaluation driven by a config; writes per-run and summary
/// rows to `output` when given.
pub fn cmd_monte_carlo(
    cfg: &Config,
    variants: &[FilterVariant],
    runs: usize,
    output: Option<&Path>,
) -> Result<MonteCarlo, PipelineError> {
    cfg.validate()?;
    let mc = monte_carlo(&cfg.gait_config(), variants, runs, cfg.seed, cfg.eval.quantile, cfg.eval.rpe_window)?;
    if let Some(out) = output {
        write_report(out, "monte-carlo", "", &mc.summary)?;
    }
    Ok(mc)
}
