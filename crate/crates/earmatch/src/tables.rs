//! CSV tables: the ear database, calibration records, conversion factors,
//! centimetre tables and training history.

use std::collections::HashSet;
use std::path::Path;

use earmatch_core::anthro::{AnthroVector, PixelDistanceVector, DISTANCE_COUNT};
use earmatch_core::calibration::{
    load_reference_factors, CalibrationRecord, ConversionFactors, Provenance,
};
use earmatch_core::matcher::{AnthroDatabase, EarRecord, Side};
use earmatch_core::net::TrainHistory;

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Fields of one data row with its 1-based line number.
type NumberedRow = (usize, Vec<String>);

/// Reads a CSV with a header, yielding (line number, fields) per row.
fn rows(path: &Path) -> Result<(Vec<String>, Vec<NumberedRow>)> {
    let bytes = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok((header, out))
}

fn expect_header(path: &Path, got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        return Err(parse_err(
            path,
            1,
            format!(
                "header must be {:?}, found {:?}",
                want.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn columns(prefix: &str, suffix: &str) -> Vec<String> {
    (1..=DISTANCE_COUNT)
        .map(|j| format!("{prefix}{j}{suffix}"))
        .collect()
}

fn parse_f64(path: &Path, line: usize, column: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("{column}: {s:?} is not a finite number"),
            )
        })
}

fn parse_vector(
    path: &Path,
    line: usize,
    names: &[String],
    fields: &[String],
) -> Result<[f64; DISTANCE_COUNT]> {
    let mut v = [0.0; DISTANCE_COUNT];
    for (j, slot) in v.iter_mut().enumerate() {
        *slot = parse_f64(path, line, &names[j], &fields[j])?;
    }
    Ok(v)
}

fn to_csv(header: &[String], records: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for r in records {
        w.write_record(&r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

fn fmt_all(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| v.to_string())
}

fn database_header(with_ref: bool) -> Vec<String> {
    let mut h = vec!["subject_id".to_string(), "side".to_string()];
    h.extend(columns("d", ""));
    if with_ref {
        h.push("hrtf_ref".into());
    }
    h
}

/// Loads `subject_id,side,d1..d7[,hrtf_ref]`. Row order is kept because it
/// breaks ties in matching.
pub fn read_database(path: &Path) -> Result<AnthroDatabase> {
    let (header, data) = rows(path)?;
    let with_ref = header.len() == DISTANCE_COUNT + 3;
    expect_header(path, &header, &database_header(with_ref))?;
    let names = columns("d", "");
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(data.len());
    for (line, fields) in data {
        if fields.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(parse_err(path, line, "empty subject_id"));
        }
        let side: Side = fields[1].parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("side {:?} is not left/right", fields[1]),
            )
        })?;
        let values = parse_vector(path, line, &names, &fields[2..])?;
        let anthro = AnthroVector::new(values).map_err(|e| parse_err(path, line, e.to_string()))?;
        if !seen.insert((fields[0].clone(), side)) {
            return Err(Error::DuplicateRow {
                path: path.to_path_buf(),
                line,
                subject_id: fields[0].clone(),
                side: side.as_str(),
            });
        }
        let hrtf_ref = with_ref
            .then(|| fields[DISTANCE_COUNT + 2].clone())
            .filter(|s| !s.is_empty());
        records.push(EarRecord {
            subject_id: fields[0].clone(),
            side,
            anthro,
            hrtf_ref,
        });
    }
    Ok(AnthroDatabase::new(records)?)
}

pub fn database_csv(db: &AnthroDatabase) -> Vec<u8> {
    let with_ref = db.records().iter().any(|r| r.hrtf_ref.is_some());
    to_csv(
        &database_header(with_ref),
        db.records().iter().map(|r| {
            let mut row = vec![r.subject_id.clone(), r.side.as_str().to_string()];
            row.extend(fmt_all(r.anthro.values()));
            if with_ref {
                row.push(r.hrtf_ref.clone().unwrap_or_default());
            }
            row
        }),
    )
}

pub fn write_database(path: &Path, db: &AnthroDatabase) -> Result<()> {
    write_atomic(path, &database_csv(db))
}

fn calibration_header() -> Vec<String> {
    let mut h = vec!["ear_id".to_string()];
    h.extend(columns("d", "_cm"));
    h.extend(columns("d", "_px"));
    h
}

/// Loads `ear_id,d1_cm..d7_cm,d1_px..d7_px`.
pub fn read_calibration(path: &Path) -> Result<Vec<CalibrationRecord>> {
    let (header, data) = rows(path)?;
    let want = calibration_header();
    expect_header(path, &header, &want)?;
    data.into_iter()
        .map(|(line, f)| {
            if f.len() != want.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} fields, found {}", want.len(), f.len()),
                ));
            }
            let cm = parse_vector(path, line, &want[1..], &f[1..])?;
            let px = parse_vector(
                path,
                line,
                &want[1 + DISTANCE_COUNT..],
                &f[1 + DISTANCE_COUNT..],
            )?;
            Ok(CalibrationRecord {
                ear_id: f[0].clone(),
                cm: AnthroVector::new(cm).map_err(|e| parse_err(path, line, e.to_string()))?,
                px: PixelDistanceVector(px),
            })
        })
        .collect()
}

pub fn write_calibration(path: &Path, records: &[CalibrationRecord]) -> Result<()> {
    let bytes = to_csv(
        &calibration_header(),
        records.iter().map(|r| {
            let mut row = vec![r.ear_id.clone()];
            row.extend(fmt_all(r.cm.values()));
            row.extend(fmt_all(&r.px.0));
            row
        }),
    );
    write_atomic(path, &bytes)
}

/// Loads a centimetre table `ear_id,d1_cm..d7_cm`; extra columns such as
/// pixel values are ignored.
pub fn read_cm_table(path: &Path) -> Result<Vec<(String, AnthroVector)>> {
    let (header, data) = rows(path)?;
    let mut want = vec!["ear_id".to_string()];
    want.extend(columns("d", "_cm"));
    if header.len() < want.len() || header[..want.len()] != want[..] {
        expect_header(path, &header, &want)?;
    }
    let mut seen = HashSet::new();
    data.into_iter()
        .map(|(line, f)| {
            if f.len() != header.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} fields, found {}", header.len(), f.len()),
                ));
            }
            if !seen.insert(f[0].clone()) {
                return Err(parse_err(
                    path,
                    line,
                    format!("duplicate ear_id {:?}", f[0]),
                ));
            }
            let cm = parse_vector(path, line, &want[1..], &f[1..])?;
            Ok((
                f[0].clone(),
                AnthroVector::new(cm).map_err(|e| parse_err(path, line, e.to_string()))?,
            ))
        })
        .collect()
}

pub const OVERALL_AVERAGE_ROW: &str = "overall_average";

fn factors_header() -> Vec<String> {
    vec!["distance".into(), "factor_cm_per_unit".into()]
}

/// Loads `distance,factor_cm_per_unit` with rows d1..d7 and
/// `overall_average`. A file holding exactly the published table keeps that
/// table's provenance.
pub fn read_factors(path: &Path) -> Result<ConversionFactors> {
    let (header, data) = rows(path)?;
    expect_header(path, &header, &factors_header())?;
    let names = columns("d", "");
    let mut factors = [None; DISTANCE_COUNT];
    let mut average = None;
    for (line, f) in data {
        if f.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 fields, found {}", f.len()),
            ));
        }
        let value = parse_f64(path, line, "factor_cm_per_unit", &f[1])?;
        let slot = if f[0] == OVERALL_AVERAGE_ROW {
            &mut average
        } else {
            let j = names
                .iter()
                .position(|n| *n == f[0])
                .ok_or_else(|| parse_err(path, line, format!("unknown distance {:?}", f[0])))?;
            &mut factors[j]
        };
        if slot.replace(value).is_some() {
            return Err(parse_err(path, line, format!("{} given twice", f[0])));
        }
    }
    let mut values = [0.0; DISTANCE_COUNT];
    for (j, v) in factors.iter().enumerate() {
        values[j] = v.ok_or_else(|| parse_err(path, 0, format!("missing row {}", names[j])))?;
    }
    let preset = load_reference_factors();
    if values == *preset.factors() && average.is_none_or(|a| a == preset.overall_average()) {
        return Ok(preset);
    }
    Ok(match average {
        Some(a) => ConversionFactors::with_average(values, a, 0, Provenance::Loaded)?,
        None => ConversionFactors::new(values, 0, Provenance::Loaded)?,
    })
}

pub fn factors_csv(f: &ConversionFactors) -> Vec<u8> {
    let names = columns("d", "");
    let mut records: Vec<Vec<String>> = names
        .iter()
        .zip(f.factors())
        .map(|(n, v)| vec![n.clone(), v.to_string()])
        .collect();
    records.push(vec![
        OVERALL_AVERAGE_ROW.into(),
        f.overall_average().to_string(),
    ]);
    to_csv(&factors_header(), records)
}

pub fn write_factors(path: &Path, f: &ConversionFactors) -> Result<()> {
    write_atomic(path, &factors_csv(f))
}

pub fn history_csv(history: &TrainHistory) -> Vec<u8> {
    to_csv(
        &["epoch".into(), "loss".into(), "radial_error_px".into()],
        history.epochs.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.loss.to_string(),
                e.radial_error_px.to_string(),
            ]
        }),
    )
}

pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    write_atomic(path, &history_csv(history))
}

/// Writes any table given its header and string rows.
pub fn write_table(
    path: &Path,
    header: &[&str],
    records: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_atomic(path, &to_csv(&header, records))
}
