//! CSV records and JSON sidecars.
//!
//! Scan CSV columns: `detuning_mhz,p_plus_w,p_minus_w,s3_norm`.
//! Trace CSV columns: `t_s,dphi_rad,atoms_cont,atoms_pulsed,transmission_pulsed`,
//! one row per sample time, with empty cells where a channel has no sample.
//! Numbers are written in shortest round-trip form, so reading a file and
//! writing it again reproduces it byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement_sim::{ContinuousRow, DecayMetadata, DecayTrace, PulsedRow, ScanMetadata, ScanRow, SpectrumScan};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
}

pub const SCAN_HEADER: [&str; 4] = ["detuning_mhz", "p_plus_w", "p_minus_w", "s3_norm"];
pub const TRACE_HEADER: [&str; 5] = ["t_s", "dphi_rad", "atoms_cont", "atoms_pulsed", "transmission_pulsed"];

/// Quantities in the metadata that are choices rather than measured values.
pub const ASSUMPTIONS: [&str; 3] = [
    "noise.quantum_efficiency is a typical APD value, not a measured one",
    "noise.detector_noise_rms is a free knob; the measured noise magnitude is not known",
    "the pulsed channel's absolute scale is drawn with the quoted relative uncertainty",
];

/// JSON sidecar accompanying a CSV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar<T> {
    pub kind: String,
    pub assumptions: Vec<String>,
    pub metadata: T,
}

impl<T> Sidecar<T> {
    pub fn new(kind: &str, metadata: T) -> Self {
        Self {
            kind: kind.to_string(),
            assumptions: ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
            metadata,
        }
    }
}

fn header_matches(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), IoError> {
    let h = rdr.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(IoError::Malformed(format!("header {:?}, expected {:?}", h, expected)));
    }
    Ok(())
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn parse(field: &str, line: u64) -> Result<Option<f64>, IoError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| IoError::Malformed(format!("line {line}: not a number: {field:?}")))
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCAN_HEADER)?;
    for r in rows {
        w.write_record([r.detuning, r.p_plus, r.p_minus, r.s3_over_s0].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan_csv<R: Read>(input: R) -> Result<Vec<ScanRow>, IoError> {
    let mut rdr = csv::Reader::from_reader(input);
    header_matches(&mut rdr, &SCAN_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse(rec.get(k).unwrap_or(""), line)?
                .ok_or_else(|| IoError::Malformed(format!("line {line}: empty cell")))?;
        }
        rows.push(ScanRow {
            detuning: v[0],
            p_plus: v[1],
            p_minus: v[2],
            s3_over_s0: v[3],
        });
    }
    Ok(rows)
}

/// Rows of both channels merged on exactly equal sample times.
fn merged_trace_rows(trace: &DecayTrace) -> Vec<[Option<f64>; 5]> {
    let mut rows: Vec<[Option<f64>; 5]> = trace
        .continuous
        .iter()
        .map(|c| [Some(c.t), Some(c.phase_difference), Some(c.inferred_atoms), None, None])
        .collect();
    for p in &trace.pulsed {
        match rows.iter_mut().find(|r| r[0] == Some(p.t_delay) && r[3].is_none()) {
            Some(r) => {
                r[3] = Some(p.inferred_atoms);
                r[4] = Some(p.transmission);
            }
            None => rows.push([Some(p.t_delay), None, None, Some(p.inferred_atoms), Some(p.transmission)]),
        }
    }
    // stable: a continuous-only row precedes a pulsed-only row at the same time
    rows.sort_by(|a, b| a[0].unwrap().total_cmp(&b[0].unwrap()));
    rows
}

pub fn write_trace_csv<W: Write>(trace: &DecayTrace, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in merged_trace_rows(trace) {
        w.write_record(r.map(cell))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads both channels; `metadata` is attached as given.
pub fn read_trace_csv<R: Read>(input: R, metadata: DecayMetadata) -> Result<DecayTrace, IoError> {
    let mut rdr = csv::Reader::from_reader(input);
    header_matches(&mut rdr, &TRACE_HEADER)?;
    let mut continuous = Vec::new();
    let mut pulsed = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [None; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse(rec.get(k).unwrap_or(""), line)?;
        }
        let t = v[0].ok_or_else(|| IoError::Malformed(format!("line {line}: missing time")))?;
        match (v[1], v[2]) {
            (Some(phase_difference), Some(inferred_atoms)) => continuous.push(ContinuousRow {
                t,
                phase_difference,
                inferred_atoms,
            }),
            (None, None) => {}
            _ => return Err(IoError::Malformed(format!("line {line}: incomplete continuous sample"))),
        }
        match (v[3], v[4]) {
            (Some(inferred_atoms), Some(transmission)) => pulsed.push(PulsedRow {
                t_delay: t,
                transmission,
                inferred_atoms,
            }),
            (None, None) => {}
            _ => return Err(IoError::Malformed(format!("line {line}: incomplete pulsed sample"))),
        }
    }
    Ok(DecayTrace {
        continuous,
        pulsed,
        metadata,
    })
}

/// Writes serializable records with a header taken from their field names.
pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    from_json(&fs::read_to_string(path)?)
}

/// Sidecar path for a CSV record: `scan.csv` -> `scan.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `scan` to `path` and its metadata (if any) to the sidecar.
pub fn save_scan(path: &Path, scan: &SpectrumScan) -> Result<(), IoError> {
    write_scan_csv(&scan.rows, fs::File::create(path)?)?;
    if let Some(meta) = &scan.metadata {
        write_json_file(&sidecar_path(path), &Sidecar::new("scan", meta))?;
    }
    Ok(())
}

/// Reads a scan and, when present, its sidecar.
pub fn load_scan(path: &Path) -> Result<SpectrumScan, IoError> {
    let rows = read_scan_csv(fs::File::open(path)?)?;
    let side = sidecar_path(path);
    let metadata = if side.exists() {
        Some(read_json_file::<Sidecar<ScanMetadata>>(&side)?.metadata)
    } else {
        None
    };
    Ok(SpectrumScan { rows, metadata })
}

pub fn save_trace(path: &Path, trace: &DecayTrace) -> Result<(), IoError> {
    write_trace_csv(trace, fs::File::create(path)?)?;
    write_json_file(&sidecar_path(path), &Sidecar::new("decay", &trace.metadata))
}

pub fn load_trace(path: &Path) -> Result<DecayTrace, IoError> {
    let meta = read_json_file::<Sidecar<DecayMetadata>>(&sidecar_path(path))?.metadata;
    read_trace_csv(fs::File::open(path)?, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{fit_spectrum, FitResult, SpectrumFitOptions};
    use crate::atomic_medium::LineSystem;
    use crate::measurement_sim::{default_decay_probe, simulate_decay, simulate_scan, DecayConfig, EnsembleModel, NoiseModel, ProbeConfig};

    fn noisy() -> NoiseModel {
        NoiseModel {
            detector_noise_rms: 1e-13,
            ..NoiseModel::default()
        }
        .with_seed(3)
    }

    #[test]
    fn scan_round_trip_is_byte_identical() {
        let scan = simulate_scan(1021.0, &EnsembleModel::default(), &ProbeConfig::default(), &noisy()).unwrap();
        let mut first = Vec::new();
        write_scan_csv(&scan.rows, &mut first).unwrap();
        assert!(first.starts_with(b"detuning_mhz,p_plus_w,p_minus_w,s3_norm\n"));
        let rows = read_scan_csv(first.as_slice()).unwrap();
        assert_eq!(rows, scan.rows);
        let mut second = Vec::new();
        write_scan_csv(&rows, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn trace_round_trip_is_byte_identical() {
        let trace = simulate_decay(&DecayConfig::default(), &EnsembleModel::default(), &default_decay_probe(), &noisy()).unwrap();
        let mut first = Vec::new();
        write_trace_csv(&trace, &mut first).unwrap();
        let back = read_trace_csv(first.as_slice(), trace.metadata.clone()).unwrap();
        assert_eq!(back.continuous, trace.continuous);
        assert_eq!(back.pulsed, trace.pulsed);
        let mut second = Vec::new();
        write_trace_csv(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn metadata_and_fit_json_round_trip() {
        let scan = simulate_scan(1021.0, &EnsembleModel::default(), &ProbeConfig::default(), &noisy()).unwrap();
        let side = Sidecar::new("scan", scan.metadata.clone().unwrap());
        let text = to_json(&side).unwrap();
        let back: Sidecar<ScanMetadata> = from_json(&text).unwrap();
        assert_eq!(back, side);
        assert_eq!(to_json(&back).unwrap(), text);

        let fit = fit_spectrum(&scan, &LineSystem::cs_d2(0.0), &SpectrumFitOptions::default()).unwrap();
        let text = to_json(&fit).unwrap();
        for key in ["\"params\"", "\"sigmas\"", "\"residual_rms\"", "\"converged\"", "\"iterations\"", "\"mask_used\""] {
            assert!(text.contains(key), "{key}");
        }
        let back: FitResult = from_json(&text).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_scan_csv("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
        assert!(read_scan_csv("detuning_mhz,p_plus_w,p_minus_w,s3_norm\n1,2,x,4\n".as_bytes()).is_err());
        let unknown = r#"{"eta": 0.027, "asymmetry": 2.8, "lines": {"lines": [], "gamma": 5.2, "phi_max": 0, "global_offset": 0}, "bogus": 1}"#;
        assert!(from_json::<EnsembleModel>(unknown).is_err());
    }
}
