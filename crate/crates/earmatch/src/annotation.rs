//! Annotation documents exchanged with the annotation tool and their on-disk
//! forms:
//!
//! ```text
//! <dir>/<image_id>.txt               "label x y" per point
//! <dir>/<image_id>/<label>.json      {"label", "x", "y", "image_id"} per point
//! <dir>/<image_id>/reference.json    {"image_id", "reference_length_cm"}
//! ```
//!
//! Labels are landmark indices 0..=54 or the reference pair `REF_A`/`REF_B`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use earmatch_core::anthro::{Landmark, LandmarkSet, LANDMARK_COUNT};
use earmatch_core::calibration::ReferenceDistance;
use serde::{Deserialize, Serialize};

use crate::fsutil::{read_text, write_atomic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationLabel {
    Landmark(u8),
    RefA,
    RefB,
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationLabel::Landmark(l) => write!(f, "{l}"),
            AnnotationLabel::RefA => f.write_str("REF_A"),
            AnnotationLabel::RefB => f.write_str("REF_B"),
        }
    }
}

impl FromStr for AnnotationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "REF_A" => Ok(AnnotationLabel::RefA),
            "REF_B" => Ok(AnnotationLabel::RefB),
            _ => s
                .parse::<u8>()
                .ok()
                .filter(|&l| (l as usize) < LANDMARK_COUNT)
                .map(AnnotationLabel::Landmark)
                .ok_or_else(|| Error::Annotation(format!("unknown label {s:?}"))),
        }
    }
}

/// Wire form of a label: a number for landmarks, a string otherwise. Numeric
/// strings are accepted too.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Number(u64),
    Text(String),
}

impl TryFrom<RawLabel> for AnnotationLabel {
    type Error = Error;

    fn try_from(raw: RawLabel) -> Result<Self> {
        match raw {
            RawLabel::Number(n) => n.to_string().parse(),
            RawLabel::Text(s) => s.parse(),
        }
    }
}

impl From<AnnotationLabel> for RawLabel {
    fn from(l: AnnotationLabel) -> Self {
        match l {
            AnnotationLabel::Landmark(n) => RawLabel::Number(n as u64),
            other => RawLabel::Text(other.to_string()),
        }
    }
}

impl Serialize for AnnotationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawLabel::from(*self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnnotationLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        AnnotationLabel::try_from(RawLabel::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPoint {
    pub label: AnnotationLabel,
    pub x: f64,
    pub y: f64,
}

/// One image's submitted landmarks, in the 224×224 source frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub points: Vec<AnnotatedPoint>,
    #[serde(default)]
    pub reference_length_cm: Option<f64>,
}

/// The per-landmark JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDocument {
    pub label: AnnotationLabel,
    pub x: f64,
    pub y: f64,
    pub image_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReferenceDocument {
    image_id: String,
    reference_length_cm: f64,
}

/// Image ids become file names, so they are restricted to a safe alphabet.
pub fn valid_image_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        if !valid_image_id(&self.image_id) {
            return Err(Error::Annotation(format!(
                "invalid image id {:?}",
                self.image_id
            )));
        }
        if self.points.is_empty() {
            return Err(Error::Annotation("no points".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.points {
            if !seen.insert(p.label) {
                return Err(Error::Annotation(format!("duplicate label {}", p.label)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Annotation(format!(
                    "label {} has non-finite coordinates",
                    p.label
                )));
            }
        }
        let refs = [AnnotationLabel::RefA, AnnotationLabel::RefB].map(|l| seen.contains(&l));
        match (refs, self.reference_length_cm) {
            ([true, true], Some(len)) if len > 0.0 && len.is_finite() => Ok(()),
            ([true, true], Some(len)) => Err(Error::Annotation(format!(
                "reference length {len} must be positive"
            ))),
            ([true, true], None) => Err(Error::Annotation(
                "REF_A/REF_B need reference_length_cm".into(),
            )),
            ([false, false], None) => Ok(()),
            ([false, false], Some(_)) => Err(Error::Annotation(
                "reference_length_cm needs REF_A and REF_B".into(),
            )),
            _ => Err(Error::Annotation(
                "REF_A and REF_B must be given together".into(),
            )),
        }
    }

    /// Points sorted by label (landmarks ascending, then REF_A, REF_B).
    pub fn sorted(mut self) -> Self {
        self.points.sort_by_key(|p| p.label);
        self
    }

    /// The numbered landmarks as a set on a `image_size` frame.
    pub fn landmark_set(&self, image_size: (u32, u32)) -> Result<LandmarkSet> {
        let points = self
            .points
            .iter()
            .filter_map(|p| match p.label {
                AnnotationLabel::Landmark(l) => Some(Landmark::new(l, p.x, p.y)),
                _ => None,
            })
            .collect::<earmatch_core::Result<Vec<_>>>()?;
        Ok(LandmarkSet::new(points, image_size)?)
    }

    pub fn reference(&self) -> Result<Option<ReferenceDistance>> {
        let find = |label| self.points.iter().find(|p| p.label == label);
        let (Some(a), Some(b), Some(len)) = (
            find(AnnotationLabel::RefA),
            find(AnnotationLabel::RefB),
            self.reference_length_cm,
        ) else {
            return Ok(None);
        };
        Ok(Some(ReferenceDistance {
            point_a: Landmark::new(0, a.x, a.y)?,
            point_b: Landmark::new(1, b.x, b.y)?,
            physical_length_cm: len,
        }))
    }
}

pub fn format_txt(annotation: &Annotation) -> String {
    let mut sorted = annotation.points.clone();
    sorted.sort_by_key(|p| p.label);
    sorted
        .iter()
        .map(|p| format!("{} {} {}\n", p.label, p.x, p.y))
        .collect()
}

pub fn parse_txt(text: &str, image_id: &str, path: &Path) -> Result<Vec<AnnotatedPoint>> {
    let err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [label, x, y] = fields[..] else {
            return Err(err(i + 1, format!("expected \"label x y\" for {image_id}")));
        };
        let label: AnnotationLabel = label
            .parse()
            .map_err(|e: Error| err(i + 1, e.to_string()))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(i + 1, format!("{s:?} is not a number")))
        };
        points.push(AnnotatedPoint {
            label,
            x: num(x)?,
            y: num(y)?,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationPaths {
    pub txt: PathBuf,
    pub json_dir: PathBuf,
}

pub fn paths(dir: &Path, image_id: &str) -> AnnotationPaths {
    AnnotationPaths {
        txt: dir.join(format!("{image_id}.txt")),
        json_dir: dir.join(image_id),
    }
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("annotation documents serialize");
    bytes.push(b'\n');
    bytes
}

/// Validates and persists an annotation in both forms, replacing any
/// previous annotation of the same image.
pub fn write_annotation(dir: &Path, annotation: &Annotation) -> Result<AnnotationPaths> {
    annotation.validate()?;
    let out = paths(dir, &annotation.image_id);
    fs::create_dir_all(&out.json_dir).map_err(|e| Error::io(&out.json_dir, e))?;
    let mut keep = BTreeSet::new();
    for p in &annotation.points {
        let name = format!("{}.json", p.label);
        let doc = PointDocument {
            label: p.label,
            x: p.x,
            y: p.y,
            image_id: annotation.image_id.clone(),
        };
        write_atomic(&out.json_dir.join(&name), &to_json(&doc))?;
        keep.insert(name);
    }
    if let Some(len) = annotation.reference_length_cm {
        let doc = ReferenceDocument {
            image_id: annotation.image_id.clone(),
            reference_length_cm: len,
        };
        write_atomic(&out.json_dir.join(REFERENCE_FILE), &to_json(&doc))?;
        keep.insert(REFERENCE_FILE.to_string());
    }
    for entry in fs::read_dir(&out.json_dir).map_err(|e| Error::io(&out.json_dir, e))? {
        let path = entry.map_err(|e| Error::io(&out.json_dir, e))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.ends_with(".json") && !keep.contains(&name) {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    write_atomic(&out.txt, format_txt(annotation).as_bytes())?;
    Ok(out)
}

const REFERENCE_FILE: &str = "reference.json";

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })
}

/// Reads the per-landmark JSON documents of one image, sorted by label.
pub fn read_point_documents(dir: &Path, image_id: &str) -> Result<Vec<PointDocument>> {
    let json_dir = paths(dir, image_id).json_dir;
    let mut docs = Vec::new();
    for path in crate::fsutil::list_files(&json_dir, &["json"])? {
        if path.file_name().is_some_and(|n| n == REFERENCE_FILE) {
            continue;
        }
        let doc: PointDocument = read_json(&path)?;
        if doc.image_id != image_id {
            return Err(Error::Annotation(format!(
                "{} belongs to image {:?}, not {image_id:?}",
                path.display(),
                doc.image_id
            )));
        }
        docs.push(doc);
    }
    docs.sort_by_key(|d| d.label);
    Ok(docs)
}

pub fn exists(dir: &Path, image_id: &str) -> bool {
    let p = paths(dir, image_id);
    valid_image_id(image_id) && (p.txt.is_file() || p.json_dir.is_dir())
}

/// Reads an annotation back, preferring the aggregated text file and
/// falling back to the per-landmark JSON documents.
pub fn read_annotation(dir: &Path, image_id: &str) -> Result<Annotation> {
    if !valid_image_id(image_id) {
        return Err(Error::Annotation(format!("invalid image id {image_id:?}")));
    }
    let p = paths(dir, image_id);
    let points = if p.txt.is_file() {
        parse_txt(&read_text(&p.txt)?, image_id, &p.txt)?
    } else {
        read_point_documents(dir, image_id)?
            .into_iter()
            .map(|d| AnnotatedPoint {
                label: d.label,
                x: d.x,
                y: d.y,
            })
            .collect()
    };
    let ref_path = p.json_dir.join(REFERENCE_FILE);
    let reference_length_cm = if ref_path.is_file() {
        Some(read_json::<ReferenceDocument>(&ref_path)?.reference_length_cm)
    } else {
        None
    };
    let annotation = Annotation {
        image_id: image_id.to_string(),
        points,
        reference_length_cm,
    }
    .sorted();
    annotation.validate()?;
    Ok(annotation)
}

/// Ids of every annotated image in `dir`, sorted.
pub fn list_annotations(dir: &Path) -> Result<Vec<String>> {
    let mut ids = BTreeSet::new();
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let stem = crate::fsutil::file_stem(&path);
        let is_txt = path.is_file() && path.extension().is_some_and(|e| e == "txt");
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if is_txt && valid_image_id(&stem) {
            ids.insert(stem);
        } else if path.is_dir() && valid_image_id(&name) {
            ids.insert(name);
        }
    }
    Ok(ids.into_iter().collect())
}
