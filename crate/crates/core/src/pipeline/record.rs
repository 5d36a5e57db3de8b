//! Run-record and report files, in the same line-delimited format as datasets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalReport, PipelineError, RunResult, RunTick};
use crate::eval::NEES_BLOCKS;
use crate::kio::{idx, FilterVariant, KioState, NoiseParams};
use crate::sim::{write_dataset_to, write_json_line, Dataset, StateRecord};

pub const RUN_FORMAT: &str = "kio-run";
pub const REPORT_FORMAT: &str = "kio-report";
pub const RECORD_VERSION: u32 = 1;

/// SHA-256 of the serialized dataset; identical to the hash of its file.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut bytes = Vec::new();
    write_dataset_to(&mut bytes, ds).expect("in-memory write");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunHeader {
    pub format: String,
    pub version: u32,
    pub variant: FilterVariant,
    /// Prior sampling seed; `None` for an exact initialization.
    pub seed: Option<u64>,
    pub dataset_sha256: String,
    pub ticks: usize,
    pub noise: NoiseParams,
    pub full_covariance: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTickRecord {
    t: f64,
    state: StateRecord,
    cov_diag: Vec<f64>,
    /// Row-major 3×3 diagonal blocks, in NEES block order.
    cov_blocks: Vec<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov: Option<Vec<f64>>,
    error: Vec<f64>,
}

/// A run as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    pub ticks: Vec<RunTick>,
}

impl RunRecord {
    pub fn new(run: &RunResult, ds: &Dataset, seed: Option<u64>, noise: NoiseParams, full_covariance: bool) -> Self {
        RunRecord {
            header: RunHeader {
                format: RUN_FORMAT.into(),
                version: RECORD_VERSION,
                variant: run.variant,
                seed,
                dataset_sha256: dataset_fingerprint(ds),
                ticks: run.ticks.len(),
                noise,
                full_covariance,
            },
            ticks: run.ticks.clone(),
        }
    }

    /// Rebuilds a run; without the full covariance only its 3×3 diagonal
    /// blocks are kept, which is all the envelope and NEES metrics read.
    pub fn to_run(&self) -> RunResult {
        RunResult {
            variant: self.header.variant,
            ticks: self.ticks.clone(),
            health: super::CovHealth::of(self.ticks.iter().map(|t| &t.cov)),
        }
    }
}

fn tick_record(t: &RunTick, full: bool) -> RunTickRecord {
    RunTickRecord {
        t: t.t,
        state: StateRecord::from(&t.mean),
        cov_diag: t.cov.diagonal().iter().copied().collect(),
        cov_blocks: NEES_BLOCKS
            .iter()
            .map(|(_, off)| std::array::from_fn(|i| t.cov[(off + i / 3, off + i % 3)]))
            .collect(),
        cov: full.then(|| t.cov.transpose().iter().copied().collect()),
        error: t.error.iter().copied().collect(),
    }
}

fn from_record(r: RunTickRecord) -> Result<RunTick, String> {
    let n = idx::DOF;
    if r.error.len() != n || r.cov_diag.len() != n || r.cov_blocks.len() != NEES_BLOCKS.len() {
        return Err(format!("expected {n}-dimensional error and covariance entries"));
    }
    let cov = match r.cov {
        Some(full) if full.len() == n * n => DMatrix::from_row_slice(n, n, &full),
        Some(full) => return Err(format!("full covariance must have {} entries, got {}", n * n, full.len())),
        None => {
            let mut m = DMatrix::from_diagonal(&DVector::from_vec(r.cov_diag));
            for (block, (_, off)) in r.cov_blocks.iter().zip(NEES_BLOCKS) {
                for (i, v) in block.iter().enumerate() {
                    m[(off + i / 3, off + i % 3)] = *v;
                }
            }
            m
        }
    };
    Ok(RunTick { t: r.t, mean: KioState::from(&r.state), cov, error: DVector::from_vec(r.error) })
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| PipelineError::io(path, e))?))
}

pub fn write_run_record_to<W: Write>(w: &mut W, rec: &RunRecord) -> std::io::Result<()> {
    write_json_line(w, &rec.header)?;
    for t in &rec.ticks {
        write_json_line(w, &tick_record(t, rec.header.full_covariance))?;
    }
    Ok(())
}

pub fn write_run_record(path: &Path, rec: &RunRecord) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    write_run_record_to(&mut w, rec).and_then(|_| w.flush()).map_err(|e| PipelineError::io(path, e))
}

pub fn read_run_record(path: &Path) -> Result<RunRecord, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let parse = |line: usize, message: String| PipelineError::Parse { path: path.display().to_string(), line, message };
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: RunHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| PipelineError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| parse(1, format!("bad header: {e}")))?
        }
        None => return Err(parse(1, "missing header record".into())),
    };
    if header.format != RUN_FORMAT || header.version != RECORD_VERSION {
        return Err(parse(1, format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut ticks = Vec::with_capacity(header.ticks);
    for (i, line) in lines {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunTickRecord = serde_json::from_str(&line).map_err(|e| parse(i + 1, e.to_string()))?;
        ticks.push(from_record(rec).map_err(|e| parse(i + 1, e))?);
    }
    if ticks.len() != header.ticks {
        return Err(parse(ticks.len() + 2, format!("header announces {} ticks, found {}", header.ticks, ticks.len())));
    }
    Ok(RunRecord { header, ticks })
}

#[derive(Serialize)]
struct ReportHeader<'a> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    dataset_sha256: &'a str,
}

/// Writes a header line naming the report kind followed by one line per row.
pub fn write_report<T: Serialize>(path: &Path, kind: &str, dataset_sha256: &str, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    let header = ReportHeader { format: REPORT_FORMAT, version: RECORD_VERSION, kind, dataset_sha256 };
    let mut write = || -> std::io::Result<()> {
        write_json_line(&mut w, &header)?;
        for r in rows {
            write_json_line(&mut w, r)?;
        }
        w.flush()
    };
    write().map_err(|e| PipelineError::io(path, e))
}

/// Reads evaluation reports written by [`write_report`].
pub fn read_eval_reports(path: &Path) -> Result<Vec<EvalReport>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let parse = |line: usize, message: String| PipelineError::Parse { path: path.display().to_string(), line, message };
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse(i + 1, e.to_string())))
        .collect()
}
