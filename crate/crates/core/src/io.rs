//! CSV logs: reading, writing and number formatting.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::models::{EncoderSample, ImuSample};
use crate::sim::{GroundTruthRecord, SimOutput};
use crate::slipdetect::{LabelInterval, SlipDecision};
use crate::stream::{merge_events, Event};

pub const IMU_HEADER: [&str; 7] = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
pub const ENCODER_HEADER: [&str; 3] = ["t", "wl", "wr"];
pub const GT_HEADER: [&str; 15] = [
    "t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz", "slip",
];
pub const ESTIMATE_HEADER: [&str; 15] = [
    "t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz", "r",
];
pub const LABEL_HEADER: [&str; 3] = ["start", "end", "slip"];
pub const DECISION_HEADER: [&str; 3] = ["t", "r", "is_slip"];

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value that survives a write/read cycle through [`fmt_sig9`].
pub fn round_sig9(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig9(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Unit quaternion `(w, x, y, z)` with `w >= 0`.
pub fn rotation_to_quaternion(rot: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rot));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

pub fn quaternion_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

/// Filter output at one timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRecord {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub slip: Vector3<f64>,
    /// Chi-square slip statistic.
    pub r: f64,
}

struct Row {
    line: u64,
    values: Vec<f64>,
}

fn parse_error(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a numeric CSV with the exact `header`. An empty file has no rows.
/// When `monotonic`, the first column must be non-decreasing.
fn read_rows(path: &Path, header: &[&str], monotonic: bool) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(open(path)?);
    let found = reader.headers()?.clone();
    if found.is_empty() {
        return Ok(Vec::new());
    }
    for (i, name) in header.iter().enumerate() {
        if found.get(i).map(str::trim) != Some(*name) {
            return Err(parse_error(
                path,
                1,
                i + 1,
                format!("expected header `{}`", header.join(",")),
            ));
        }
    }
    if found.len() != header.len() {
        return Err(parse_error(
            path,
            1,
            header.len() + 1,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(i, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_error(path, line, i + 1, format!("`{field}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if monotonic {
            let t = values[0];
            if t < last {
                return Err(Error::NonMonotonicTimestamps {
                    path: path.to_path_buf(),
                    line,
                    t,
                });
            }
            last = t;
        }
        rows.push(Row { line, values });
    }
    Ok(rows)
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row.iter().map(|&x| fmt_sig9(x)))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn flag(path: &Path, row: &Row, column: usize) -> Result<bool> {
    match row.values[column] {
        0.0 => Ok(false),
        1.0 => Ok(true),
        x => Err(parse_error(path, row.line, column + 1, format!("expected 0 or 1, got {x}"))),
    }
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>> {
    Ok(read_rows(path, &IMU_HEADER, true)?
        .into_iter()
        .map(|r| ImuSample::new(r.values[0], vec3(&r.values[1..4]), vec3(&r.values[4..7])))
        .collect())
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_rows(
        path,
        &IMU_HEADER,
        samples.iter().map(|s| {
            let mut row = vec![s.t];
            row.extend(s.gyro.iter().chain(s.accel.iter()));
            row
        }),
    )
}

pub fn read_encoder(path: &Path) -> Result<Vec<EncoderSample>> {
    Ok(read_rows(path, &ENCODER_HEADER, true)?
        .into_iter()
        .map(|r| EncoderSample::new(r.values[0], r.values[1], r.values[2]))
        .collect())
}

pub fn write_encoder(path: &Path, samples: &[EncoderSample]) -> Result<()> {
    write_rows(
        path,
        &ENCODER_HEADER,
        samples.iter().map(|s| vec![s.t, s.left, s.right]),
    )
}

fn pose_row(t: f64, rot: &Matrix3<f64>, pos: &Vector3<f64>, vel: &Vector3<f64>, slip: &Vector3<f64>, last: f64) -> Vec<f64> {
    let mut row = vec![t];
    row.extend(rotation_to_quaternion(rot));
    row.extend(pos.iter().chain(vel.iter()).chain(slip.iter()));
    row.push(last);
    row
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    read_rows(path, &GT_HEADER, true)?
        .iter()
        .map(|r| {
            let v = &r.values;
            Ok(GroundTruthRecord {
                t: v[0],
                rot: quaternion_to_rotation([v[1], v[2], v[3], v[4]]),
                pos: vec3(&v[5..8]),
                vel: vec3(&v[8..11]),
                slip: vec3(&v[11..14]),
                slip_active: flag(path, r, 14)?,
            })
        })
        .collect()
}

pub fn write_ground_truth(path: &Path, records: &[GroundTruthRecord]) -> Result<()> {
    write_rows(
        path,
        &GT_HEADER,
        records.iter().map(|g| {
            pose_row(g.t, &g.rot, &g.pos, &g.vel, &g.slip, f64::from(u8::from(g.slip_active)))
        }),
    )
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRecord>> {
    Ok(read_rows(path, &ESTIMATE_HEADER, true)?
        .into_iter()
        .map(|r| {
            let v = &r.values;
            EstimateRecord {
                t: v[0],
                rot: quaternion_to_rotation([v[1], v[2], v[3], v[4]]),
                pos: vec3(&v[5..8]),
                vel: vec3(&v[8..11]),
                slip: vec3(&v[11..14]),
                r: v[14],
            }
        })
        .collect())
}

pub fn write_estimates(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    write_rows(
        path,
        &ESTIMATE_HEADER,
        records
            .iter()
            .map(|e| pose_row(e.t, &e.rot, &e.pos, &e.vel, &e.slip, e.r)),
    )
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelInterval>> {
    read_rows(path, &LABEL_HEADER, false)?
        .iter()
        .map(|r| {
            let (start, end) = (r.values[0], r.values[1]);
            if !(end >= start) {
                return Err(parse_error(path, r.line, 2, "interval end precedes start"));
            }
            Ok(LabelInterval {
                start,
                end,
                slip: flag(path, r, 2)?,
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[LabelInterval]) -> Result<()> {
    write_rows(
        path,
        &LABEL_HEADER,
        labels
            .iter()
            .map(|l| vec![l.start, l.end, f64::from(u8::from(l.slip))]),
    )
}

pub fn write_decisions(path: &Path, decisions: &[SlipDecision]) -> Result<()> {
    write_rows(
        path,
        &DECISION_HEADER,
        decisions
            .iter()
            .map(|d| vec![d.t, d.r, f64::from(u8::from(d.is_slip))]),
    )
}

/// File names used by [`write_simulation`].
pub struct SimPaths {
    pub imu: PathBuf,
    pub encoder: PathBuf,
    pub ground_truth: PathBuf,
    pub labels: PathBuf,
}

impl SimPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            imu: dir.join("imu.csv"),
            encoder: dir.join("encoder.csv"),
            ground_truth: dir.join("gt.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

pub fn write_simulation(dir: &Path, sim: &SimOutput) -> Result<SimPaths> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let paths = SimPaths::in_dir(dir);
    write_imu(&paths.imu, &sim.imu)?;
    write_encoder(&paths.encoder, &sim.encoder)?;
    write_ground_truth(&paths.ground_truth, &sim.truth)?;
    write_labels(&paths.labels, &sim.labels)?;
    Ok(paths)
}

/// Reads the sensor logs into one time-ordered stream (IMU first on ties)
/// and, if given, the ground truth.
pub fn parse_streams(
    imu_path: &Path,
    encoder_path: &Path,
    gt_path: Option<&Path>,
) -> Result<(Vec<Event>, Option<Vec<GroundTruthRecord>>)> {
    let imu = read_imu(imu_path)?;
    let encoder = read_encoder(encoder_path)?;
    let gt = gt_path.map(read_ground_truth).transpose()?;
    Ok((merge_events(&imu, &encoder), gt))
}
