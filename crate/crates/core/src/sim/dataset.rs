//! Line-delimited dataset files.
//!
//! The first line is a header record; each following line holds one tick
//! with its IMU sample, contact flags, relative-pose measurements and
//! ground truth. Every float is written with 17 significant digits, which
//! round-trips `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use super::{generate_gait, synthesize_imu, synthesize_relpose, GaitConfig, SimError, TruthSample};
use crate::kio::{se3, se3_parts, ContactFlags, Foot, ImuSample, KioState, RelPoseMeasurement};

pub const DATASET_FORMAT: &str = "kio-dataset";
pub const DATASET_VERSION: u32 = 1;

/// JSON formatter that prints floats as `{:.16e}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

/// Writes `value` as a single JSON line with full-precision floats.
pub fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *w, FullPrecision);
    value.serialize(&mut ser).map_err(std::io::Error::other)?;
    w.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub config: GaitConfig,
}

impl DatasetHeader {
    pub fn new(config: GaitConfig) -> Self {
        DatasetHeader { format: DATASET_FORMAT.into(), version: DATASET_VERSION, config }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub truth: TruthSample,
    pub imu: ImuSample,
    pub meas: Vec<RelPoseMeasurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub ticks: Vec<Tick>,
}

impl Dataset {
    pub fn duration(&self) -> f64 {
        match (self.ticks.first(), self.ticks.last()) {
            (Some(a), Some(b)) => b.truth.t - a.truth.t,
            _ => 0.0,
        }
    }

    /// Share of ticks with each foot in contact.
    pub fn contact_ratio(&self) -> (f64, f64) {
        let n = self.ticks.len().max(1) as f64;
        let lf = self.ticks.iter().filter(|t| t.truth.contacts.lf).count() as f64;
        let rf = self.ticks.iter().filter(|t| t.truth.contacts.rf).count() as f64;
        (lf / n, rf / n)
    }
}

/// Generates the truth and all sensor streams for `cfg`.
pub fn simulate(cfg: &GaitConfig) -> Result<Dataset, SimError> {
    let mut truth = generate_gait(cfg)?;
    let imu = synthesize_imu(&mut truth, &cfg.noise, cfg.seed, cfg.noise_free);
    let meas = synthesize_relpose(&truth, &cfg.noise, cfg.seed, cfg.noise_free)?;
    let ticks = truth
        .into_iter()
        .zip(imu)
        .zip(meas)
        .map(|((truth, imu), meas)| Tick { truth, imu, meas })
        .collect();
    Ok(Dataset { header: DatasetHeader::new(cfg.clone()), ticks })
}

#[derive(Serialize, Deserialize)]
struct ImuRecord {
    acc: [f64; 3],
    gyro: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct MeasRecord {
    foot: Foot,
    translation: [f64; 3],
    rotation: [f64; 9],
    cov: Vec<f64>,
}

#[allow(non_snake_case)]
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct StateRecord {
    p: [f64; 3],
    R: [f64; 9],
    v: [f64; 3],
    d_lf: [f64; 3],
    Z_lf: [f64; 9],
    d_rf: [f64; 3],
    Z_rf: [f64; 9],
    b: [f64; 6],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TickRecord {
    t: f64,
    imu: ImuRecord,
    contacts: ContactFlags,
    meas: Vec<MeasRecord>,
    truth: StateRecord,
}

fn v3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn m3(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

fn to_m3(a: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(a)
}

impl From<&KioState> for StateRecord {
    fn from(x: &KioState) -> Self {
        StateRecord {
            p: v3(&x.p),
            R: m3(&x.r),
            v: v3(&x.v),
            d_lf: v3(&x.d_lf),
            Z_lf: m3(&x.z_lf),
            d_rf: v3(&x.d_rf),
            Z_rf: m3(&x.z_rf),
            b: [x.b_a.x, x.b_a.y, x.b_a.z, x.b_g.x, x.b_g.y, x.b_g.z],
        }
    }
}

impl From<&StateRecord> for KioState {
    fn from(r: &StateRecord) -> Self {
        KioState {
            p: Vector3::from(r.p),
            r: to_m3(&r.R),
            v: Vector3::from(r.v),
            d_lf: Vector3::from(r.d_lf),
            z_lf: to_m3(&r.Z_lf),
            d_rf: Vector3::from(r.d_rf),
            z_rf: to_m3(&r.Z_rf),
            b_a: Vector3::new(r.b[0], r.b[1], r.b[2]),
            b_g: Vector3::new(r.b[3], r.b[4], r.b[5]),
        }
    }
}

/// Serializable form of a [`KioState`] (rotations row-major).
pub fn state_record(x: &KioState) -> impl Serialize {
    StateRecord::from(x)
}

fn tick_record(t: &Tick) -> TickRecord {
    TickRecord {
        t: t.truth.t,
        imu: ImuRecord { acc: v3(&t.imu.acc), gyro: v3(&t.imu.gyro) },
        contacts: t.truth.contacts,
        meas: t
            .meas
            .iter()
            .map(|m| {
                let (r, p) = se3_parts(&m.pose);
                MeasRecord { foot: m.foot, translation: v3(&p), rotation: m3(&r), cov: m.noise_cov.iter().copied().collect() }
            })
            .collect(),
        truth: StateRecord::from(&t.truth.state),
    }
}

fn from_record(r: TickRecord) -> Result<Tick, String> {
    let mut meas = Vec::with_capacity(r.meas.len());
    for m in r.meas {
        if m.cov.len() != 36 {
            return Err(format!("measurement covariance must have 36 entries, got {}", m.cov.len()));
        }
        meas.push(RelPoseMeasurement {
            foot: m.foot,
            pose: se3(&to_m3(&m.rotation), &Vector3::from(m.translation)),
            noise_cov: Matrix6::from_column_slice(&m.cov),
        });
    }
    Ok(Tick {
        truth: TruthSample { t: r.t, state: KioState::from(&r.truth), contacts: r.contacts },
        imu: ImuSample { t: r.t, acc: Vector3::from(r.imu.acc), gyro: Vector3::from(r.imu.gyro) },
        meas,
    })
}

pub fn write_dataset_to<W: Write>(w: &mut W, ds: &Dataset) -> std::io::Result<()> {
    write_json_line(w, &ds.header)?;
    for t in &ds.ticks {
        write_json_line(w, &tick_record(t))?;
    }
    Ok(())
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset_from<R: BufRead>(reader: R) -> Result<Dataset, SimError> {
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| SimError::Parse { line: line + 1, message };
    let header: DatasetHeader = match lines.next() {
        Some((i, line)) => serde_json::from_str(&line?).map_err(|e| parse_err(i, format!("bad header: {e}")))?,
        None => return Err(parse_err(0, "missing header record".into())),
    };
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(parse_err(0, format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut ticks = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TickRecord = serde_json::from_str(&line).map_err(|e| parse_err(i, e.to_string()))?;
        ticks.push(from_record(rec).map_err(|e| parse_err(i, e))?);
    }
    Ok(Dataset { header, ticks })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, SimError> {
    read_dataset_from(BufReader::new(File::open(path)?))
}
