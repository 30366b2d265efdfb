//! Landmark text files: "label x y" lines (lm55 and subsets), and the
//! I-BUG `.pts` layout whose points are implicitly labelled 0, 1, 2, …

use std::fmt::Write as _;
use std::path::Path;

use earmatch_core::anthro::{Landmark, LandmarkSet};

use crate::fsutil::{read_text, write_atomic};
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn number(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("{what} {field:?} is not a finite number"),
            )
        })
}

/// Parses "label x y" lines. Blank lines are ignored. `path` is only used in
/// error messages.
pub fn parse_lm(text: &str, image_size: (u32, u32), path: &Path) -> Result<LandmarkSet> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [label, x, y] = fields[..] else {
            return Err(parse_err(
                path,
                line,
                format!("expected \"label x y\", got {} fields", fields.len()),
            ));
        };
        let label: u8 = label.parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("label {label:?} is not an integer in 0..=54"),
            )
        })?;
        let point = Landmark::new(
            label,
            number(path, line, x, "x")?,
            number(path, line, y, "y")?,
        )
        .map_err(|e| parse_err(path, line, e.to_string()))?;
        points.push(point);
    }
    LandmarkSet::new(points, image_size).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Parses an I-BUG `.pts` file (`version`, `n_points`, then `{ x y … }`).
pub fn parse_pts(text: &str, image_size: (u32, u32), path: &Path) -> Result<LandmarkSet> {
    let mut declared = None;
    let mut points = Vec::new();
    let mut inside = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with("version") {
            continue;
        }
        if let Some(n) = t.strip_prefix("n_points:") {
            declared = Some(
                n.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, line, "n_points is not an integer"))?,
            );
        } else if t == "{" {
            inside = true;
        } else if t == "}" {
            inside = false;
        } else if inside {
            let f: Vec<&str> = t.split_whitespace().collect();
            let [x, y] = f[..] else {
                return Err(parse_err(path, line, "expected \"x y\""));
            };
            let label =
                u8::try_from(points.len()).map_err(|_| parse_err(path, line, "too many points"))?;
            let lm = Landmark::new(
                label,
                number(path, line, x, "x")?,
                number(path, line, y, "y")?,
            )
            .map_err(|e| parse_err(path, line, e.to_string()))?;
            points.push(lm);
        } else {
            return Err(parse_err(path, line, format!("unexpected {t:?}")));
        }
    }
    if let Some(n) = declared {
        if n != points.len() {
            return Err(parse_err(
                path,
                0,
                format!("n_points is {n} but {} points follow", points.len()),
            ));
        }
    }
    LandmarkSet::new(points, image_size).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Reads a landmark file, choosing the parser by extension (`.pts` or
/// "label x y" text).
pub fn read_landmarks(path: &Path, image_size: (u32, u32)) -> Result<LandmarkSet> {
    let text = read_text(path)?;
    let is_pts = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pts"));
    if is_pts {
        parse_pts(&text, image_size, path)
    } else {
        parse_lm(&text, image_size, path)
    }
}

/// One "label x y" line per point. Coordinates use the shortest decimal
/// form that parses back to the same value.
pub fn format_lm(set: &LandmarkSet) -> String {
    let mut out = String::new();
    for p in set.points() {
        let _ = writeln!(out, "{} {} {}", p.label, p.x, p.y);
    }
    out
}

pub fn write_landmarks(path: &Path, set: &LandmarkSet) -> Result<()> {
    write_atomic(path, format_lm(set).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("x.txt")
    }

    #[test]
    fn parses_lines_and_reports_line_numbers() {
        let s = parse_lm("0 1.5 2\n\n3 4 5e1\n", (224, 224), p()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(3).unwrap().y, 50.0);

        let err = parse_lm("0 1 2\n1 nan 2\n", (224, 224), p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_lm("0 1 2 3\n", (224, 224), p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_lm("55 1 2\n", (224, 224), p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_lm("4 1 2\n4 3 4\n", (224, 224), p()).is_err());
    }

    #[test]
    fn pts_points_are_labelled_in_order() {
        let text = "version: 1\nn_points: 3\n{\n1 2\n3 4\n5 6\n}\n";
        let s = parse_pts(text, (100, 100), p()).unwrap();
        assert_eq!(s.to_interleaved(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(parse_pts("n_points: 4\n{\n1 2\n}\n", (100, 100), p()).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(coords in proptest::collection::vec(-1e4..1e4f64, 110)) {
            let set = LandmarkSet::from_interleaved(&coords, (224, 224)).unwrap();
            let back = parse_lm(&format_lm(&set), (224, 224), p()).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
