//! Nearest-ear search over the anthropometric database.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::anthro::{AnthroVector, DISTANCE_COUNT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Single-letter tag used in file names.
    pub fn tag(&self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l" | "left" => Ok(Side::Left),
            "r" | "right" => Ok(Side::Right),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown ear side {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarRecord {
    pub subject_id: String,
    pub side: Side,
    pub anthro: AnthroVector,
    /// Opaque reference to the subject's HRTF set, usually a SOFA path.
    pub hrtf_ref: Option<String>,
}

/// Ear records in file order. The row index breaks distance ties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnthroDatabase {
    records: Vec<EarRecord>,
}

impl AnthroDatabase {
    pub fn new(records: Vec<EarRecord>) -> Result<Self> {
        let mut keys: Vec<(&str, Side)> = records
            .iter()
            .map(|r| (r.subject_id.as_str(), r.side))
            .collect();
        keys.sort_unstable();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateRecord {
                subject_id: String::from(w[0].0),
                side: w[0].1.as_str(),
            });
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[EarRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Optional knobs; the defaults reproduce the plain unweighted search over
/// every ear.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchOptions {
    /// Per-component weights `w_j` in `sqrt(Σ w_j (a_j − b_j)²)`.
    pub weights: Option<[f64; DISTANCE_COUNT]>,
    /// Only consider records of this side.
    pub side: Option<Side>,
}

/// Plain 7-D Euclidean distance.
pub fn vector_distance(a: &AnthroVector, b: &AnthroVector) -> Result<f64> {
    weighted_distance(a, b, &[1.0; DISTANCE_COUNT])
}

fn weighted_distance(a: &AnthroVector, b: &AnthroVector, w: &[f64; DISTANCE_COUNT]) -> Result<f64> {
    let mut sum = 0.0;
    for (j, ((&x, &y), &wj)) in a.values().iter().zip(b.values()).zip(w).enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(j + 1));
        }
        let d = x - y;
        sum += wj * d * d;
    }
    Ok(libm::sqrt(sum))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked<'a> {
    /// Row index in the database.
    pub row: usize,
    pub record: &'a EarRecord,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<'a> {
    ranking: Vec<Ranked<'a>>,
}

impl<'a> MatchResult<'a> {
    pub fn best(&self) -> &Ranked<'a> {
        &self.ranking[0]
    }

    pub fn distance(&self) -> f64 {
        self.ranking[0].distance
    }

    /// All candidates by ascending distance, ties by ascending row.
    pub fn ranking(&self) -> &[Ranked<'a>] {
        &self.ranking
    }
}

pub fn best_match<'a>(query: &AnthroVector, db: &'a AnthroDatabase) -> Result<MatchResult<'a>> {
    best_match_with(query, db, &MatchOptions::default())
}

pub fn best_match_with<'a>(
    query: &AnthroVector,
    db: &'a AnthroDatabase,
    options: &MatchOptions,
) -> Result<MatchResult<'a>> {
    let weights = options.weights.unwrap_or([1.0; DISTANCE_COUNT]);
    if let Some(j) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(alloc::format!(
            "weight w{} must be finite and non-negative",
            j + 1
        )));
    }
    let mut ranking = db
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| options.side.is_none_or(|s| s == r.side))
        .map(|(row, record)| {
            Ok(Ranked {
                row,
                record,
                distance: weighted_distance(query, &record.anthro, &weights)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ranking.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    // Stable sort keeps row order among equal distances.
    ranking.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(MatchResult { ranking })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(id: &str, side: Side, v: [f64; 7]) -> EarRecord {
        EarRecord {
            subject_id: id.into(),
            side,
            anthro: AnthroVector::new(v).unwrap(),
            hrtf_ref: None,
        }
    }

    fn db_from(rows: &[[f64; 7]]) -> AnthroDatabase {
        AnthroDatabase::new(
            rows.iter()
                .enumerate()
                .map(|(i, v)| {
                    rec(
                        &format!("s{}", i / 2),
                        if i % 2 == 0 { Side::Left } else { Side::Right },
                        *v,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn distance_basics() {
        let a = AnthroVector::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert_eq!(vector_distance(&a, &a).unwrap(), 0.0);
        let b = AnthroVector::new([2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert_eq!(vector_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn exact_member_and_ties() {
        let db = db_from(&[[1.0; 7], [2.0; 7], [3.0; 7]]);
        let r = best_match(&AnthroVector::new([2.0; 7]).unwrap(), &db).unwrap();
        assert_eq!(r.best().row, 1);
        assert_eq!(r.distance(), 0.0);

        let twins = db_from(&[[4.0; 7], [4.0; 7]]);
        let r = best_match(&AnthroVector::new([1.0; 7]).unwrap(), &twins).unwrap();
        assert_eq!(r.best().row, 0);
        assert_eq!(r.ranking()[1].row, 1);
    }

    #[test]
    fn empty_and_duplicate_databases() {
        let empty = AnthroDatabase::default();
        assert_eq!(
            best_match(&AnthroVector::new([1.0; 7]).unwrap(), &empty),
            Err(Error::EmptyDatabase)
        );
        let dup = AnthroDatabase::new(vec![
            rec("a", Side::Left, [1.0; 7]),
            rec("a", Side::Left, [2.0; 7]),
        ]);
        assert!(matches!(
            dup,
            Err(Error::DuplicateRecord { side: "left", .. })
        ));
    }

    #[test]
    fn side_filter_and_weights() {
        let db = db_from(&[[1.0; 7], [1.1; 7], [5.0; 7]]);
        let q = AnthroVector::new([1.0; 7]).unwrap();
        let right = best_match_with(
            &q,
            &db,
            &MatchOptions {
                side: Some(Side::Right),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(right.best().row, 1);
        assert_eq!(right.ranking().len(), 1);

        let mut w = [0.0; 7];
        w[0] = 1.0;
        let db = db_from(&[
            [1.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0],
            [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        ]);
        let r = best_match_with(
            &q,
            &db,
            &MatchOptions {
                weights: Some(w),
                side: None,
            },
        )
        .unwrap();
        assert_eq!(r.best().row, 0);
        assert!(best_match_with(
            &q,
            &db,
            &MatchOptions {
                weights: Some([-1.0; 7]),
                side: None
            }
        )
        .is_err());
    }

    #[test]
    fn side_parsing() {
        assert_eq!("L".parse::<Side>().unwrap(), Side::Left);
        assert_eq!("right".parse::<Side>().unwrap(), Side::Right);
        assert!("up".parse::<Side>().is_err());
    }

    fn vec7() -> impl Strategy<Value = [f64; 7]> {
        proptest::array::uniform7(0.5..8.0f64)
    }

    proptest! {
        #[test]
        fn ranking_is_minimal_permutation(rows in proptest::collection::vec(vec7(), 1..40), q in vec7()) {
            let db = db_from(&rows);
            let query = AnthroVector::new(q).unwrap();
            let r = best_match(&query, &db).unwrap();
            prop_assert!(r.ranking().iter().all(|x| r.distance() <= x.distance));
            let mut rows_seen: Vec<_> = r.ranking().iter().map(|x| x.row).collect();
            rows_seen.sort_unstable();
            prop_assert_eq!(rows_seen, (0..rows.len()).collect::<Vec<_>>());
            prop_assert!(r.ranking().windows(2).all(|w| w[0].distance <= w[1].distance));
            prop_assert_eq!(best_match(&query, &db).unwrap(), r);
        }

        #[test]
        fn translation_and_scaling_keep_argmin(rows in proptest::collection::vec(vec7(), 1..40), q in vec7(), c in vec7(), k in 0.5..4.0f64) {
            let db = db_from(&rows);
            let base = best_match(&AnthroVector::new(q).unwrap(), &db).unwrap().best().row;

            let shift = |v: [f64; 7]| { let mut o = v; for j in 0..7 { o[j] += c[j]; } o };
            let moved: Vec<_> = rows.iter().map(|v| shift(*v)).collect();
            let moved_db = db_from(&moved);
            let r = best_match(&AnthroVector::new(shift(q)).unwrap(), &moved_db).unwrap();
            // Shifting changes rounding, so compare distances rather than
            // insisting on one row when two are within rounding of each other.
            let d_best = vector_distance(&AnthroVector::new(q).unwrap(), &db.records()[r.best().row].anthro).unwrap();
            let d_base = vector_distance(&AnthroVector::new(q).unwrap(), &db.records()[base].anthro).unwrap();
            prop_assert!((d_best - d_base).abs() <= 1e-9);

            let scaled: Vec<_> = rows.iter().map(|v| v.map(|x| x * k)).collect();
            let scaled_db = db_from(&scaled);
            let r = best_match(&AnthroVector::new(q.map(|x| x * k)).unwrap(), &scaled_db).unwrap();
            let d_best = vector_distance(&AnthroVector::new(q).unwrap(), &db.records()[r.best().row].anthro).unwrap();
            prop_assert!((d_best - d_base).abs() <= 1e-9);
        }
    }
}
