//! Landmarks, the seven pinna distances and the Euclidean primitives shared
//! by every stage.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Number of landmarks in the I-BUG ear annotation scheme.
pub const LANDMARK_COUNT: usize = 55;

/// Side length of the square network frame, in pixels.
pub const FRAME_SIZE: u32 = 224;

/// Divisor applied to pixel distances: the 224×224 diagonal (316.78)
/// truncated to 316, so points near opposite corners can measure just over 1.
pub const NORMALIZATION_PX: f64 = 316.0;

/// Number of pinna distances recoverable from a frontal ear image.
pub const DISTANCE_COUNT: usize = 7;

/// A labelled point in image-pixel coordinates. Coordinates are continuous;
/// network output is sub-pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub label: u8,
    pub x: f64,
    pub y: f64,
}

impl Landmark {
    pub fn new(label: u8, x: f64, y: f64) -> Result<Self> {
        if label as usize >= LANDMARK_COUNT {
            return Err(Error::LabelOutOfRange(label));
        }
        let lm = Self { label, x, y };
        if !lm.is_finite() {
            return Err(Error::InvalidLandmark { label });
        }
        Ok(lm)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn in_frame(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }
}

/// Straight-line distance between two landmarks, in pixels.
pub fn euclidean_distance(a: &Landmark, b: &Landmark) -> Result<f64> {
    for lm in [a, b] {
        if !lm.is_finite() {
            return Err(Error::InvalidLandmark { label: lm.label });
        }
    }
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    Ok(libm::sqrt(dx * dx + dy * dy))
}

/// Landmarks of one image, sorted by label with each label at most once.
///
/// A full set has all 55 labels; subsets (e.g. the output of
/// [`select_relevant`]) are the same type with fewer points.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Landmark>,
    width: u32,
    height: u32,
}

impl LandmarkSet {
    /// Builds a set from points in any order.
    pub fn new(mut points: Vec<Landmark>, (width, height): (u32, u32)) -> Result<Self> {
        for lm in &points {
            if lm.label as usize >= LANDMARK_COUNT {
                return Err(Error::LabelOutOfRange(lm.label));
            }
            if !lm.is_finite() {
                return Err(Error::InvalidLandmark { label: lm.label });
            }
        }
        points.sort_by_key(|lm| lm.label);
        if let Some(w) = points.windows(2).find(|w| w[0].label == w[1].label) {
            return Err(Error::DuplicateLabel(w[0].label));
        }
        Ok(Self {
            points,
            width,
            height,
        })
    }

    /// Builds a complete 55-point set.
    pub fn full(points: Vec<Landmark>, image_size: (u32, u32)) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::WrongLandmarkCount(points.len()));
        }
        Self::new(points, image_size)
    }

    /// Builds a full set from interleaved `x0, y0, x1, y1, …` coordinates.
    pub fn from_interleaved(coords: &[f64], image_size: (u32, u32)) -> Result<Self> {
        if coords.len() != 2 * LANDMARK_COUNT {
            return Err(Error::LengthMismatch {
                expected: 2 * LANDMARK_COUNT,
                got: coords.len(),
            });
        }
        let points = coords
            .chunks_exact(2)
            .enumerate()
            .map(|(i, xy)| Landmark::new(i as u8, xy[0], xy[1]))
            .collect::<Result<Vec<_>>>()?;
        Self::full(points, image_size)
    }

    /// Interleaved `x0, y0, x1, y1, …` coordinates in label order.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.points.iter().flat_map(|lm| [lm.x, lm.y]).collect()
    }

    pub fn points(&self) -> &[Landmark] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn is_complete(&self) -> bool {
        self.points.len() == LANDMARK_COUNT
    }

    pub fn get(&self, label: u8) -> Option<&Landmark> {
        self.points
            .binary_search_by_key(&label, |lm| lm.label)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Labels of points lying outside `[0, width) × [0, height)`.
    pub fn out_of_frame(&self) -> Vec<u8> {
        self.points
            .iter()
            .filter(|lm| !lm.in_frame(self.width, self.height))
            .map(|lm| lm.label)
            .collect()
    }

    /// Applies `f` to every coordinate pair, keeping labels, and sets the
    /// frame to `image_size`.
    pub fn map_points(
        &self,
        image_size: (u32, u32),
        mut f: impl FnMut(f64, f64) -> (f64, f64),
    ) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|lm| {
                let (x, y) = f(lm.x, lm.y);
                Landmark::new(lm.label, x, y)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, image_size)
    }

    /// Axis-aligned bounding box `(x_min, y_min, x_max, y_max)`.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.points.first()?;
        Some(self.points.iter().fold(
            (first.x, first.y, first.x, first.y),
            |(x0, y0, x1, y1), lm| (x0.min(lm.x), y0.min(lm.y), x1.max(lm.x), y1.max(lm.y)),
        ))
    }
}

/// One row of the distance table: which two landmarks span a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistancePair {
    pub name: &'static str,
    pub a: u8,
    pub b: u8,
}

/// The seven landmark pairs defining d1..d7.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistancePairMap {
    pairs: [DistancePair; DISTANCE_COUNT],
}

impl DistancePairMap {
    pub const PINNA: Self = Self {
        pairs: [
            DistancePair {
                name: "cavum concha height",
                a: 20,
                b: 39,
            },
            DistancePair {
                name: "cymba concha height",
                a: 20,
                b: 48,
            },
            DistancePair {
                name: "cavum concha width",
                a: 37,
                b: 43,
            },
            DistancePair {
                name: "fossa height",
                a: 25,
                b: 48,
            },
            DistancePair {
                name: "pinna height",
                a: 4,
                b: 18,
            },
            DistancePair {
                name: "pinna width",
                a: 33,
                b: 37,
            },
            DistancePair {
                name: "intertragal incisure width",
                a: 38,
                b: 40,
            },
        ],
    };

    pub fn pairs(&self) -> &[DistancePair; DISTANCE_COUNT] {
        &self.pairs
    }

    /// Sorted union of every label referenced by a pair.
    pub fn labels(&self) -> Vec<u8> {
        let mut labels: Vec<u8> = self.pairs.iter().flat_map(|p| [p.a, p.b]).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

impl Default for DistancePairMap {
    fn default() -> Self {
        Self::PINNA
    }
}

/// Anomalies worth surfacing on a measured vector; none of them is fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureWarning {
    /// Every distance is zero, usually coincident annotations.
    AllZero,
    /// Component `d{0}` exceeds 1, so its landmarks left the frame.
    ExceedsUnit(usize),
}

/// Seven pixel distances divided by [`NORMALIZATION_PX`], ordered d1..d7.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDistanceVector(pub [f64; DISTANCE_COUNT]);

impl PixelDistanceVector {
    pub fn values(&self) -> &[f64; DISTANCE_COUNT] {
        &self.0
    }

    pub fn warnings(&self) -> Vec<MeasureWarning> {
        let mut out = Vec::new();
        if self.0.iter().all(|&d| d == 0.0) {
            out.push(MeasureWarning::AllZero);
        }
        out.extend(
            self.0
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 1.0)
                .map(|(j, _)| MeasureWarning::ExceedsUnit(j + 1)),
        );
        out
    }
}

/// Seven pinna distances in centimetres, ordered d1 (cavum concha height)
/// to d7 (intertragal incisure width).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnthroVector([f64; DISTANCE_COUNT]);

impl AnthroVector {
    /// A measured anthropometric vector: every component finite and > 0.
    pub fn new(values: [f64; DISTANCE_COUNT]) -> Result<Self> {
        let v = Self::query(values)?;
        if let Some(j) = values.iter().position(|&d| d <= 0.0) {
            return Err(Error::NonPositive(j + 1));
        }
        Ok(v)
    }

    /// A query vector: finite components only. A degenerate measurement can
    /// legitimately produce zeros, and the matcher still ranks it.
    pub fn query(values: [f64; DISTANCE_COUNT]) -> Result<Self> {
        if let Some(j) = values.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite(j + 1));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64; DISTANCE_COUNT] {
        &self.0
    }
}

/// Measures d1..d7 on a 224×224 landmark set and divides by 316.
///
/// The set may be a subset as long as every label referenced by `map` is
/// present.
pub fn measure_distances(set: &LandmarkSet, map: &DistancePairMap) -> Result<PixelDistanceVector> {
    let (width, height) = set.image_size();
    if (width, height) != (FRAME_SIZE, FRAME_SIZE) {
        return Err(Error::SizeMismatch {
            expected_w: FRAME_SIZE,
            expected_h: FRAME_SIZE,
            width,
            height,
        });
    }
    let mut d = [0.0; DISTANCE_COUNT];
    for (slot, pair) in d.iter_mut().zip(map.pairs()) {
        let a = set
            .get(pair.a)
            .ok_or(Error::IncompleteLandmarkSet(pair.a))?;
        let b = set
            .get(pair.b)
            .ok_or(Error::IncompleteLandmarkSet(pair.b))?;
        *slot = euclidean_distance(a, b)? / NORMALIZATION_PX;
    }
    Ok(PixelDistanceVector(d))
}

/// Keeps only the landmarks referenced by the default pair map.
pub fn select_relevant(set: &LandmarkSet) -> Result<LandmarkSet> {
    select_with(set, &DistancePairMap::PINNA)
}

/// Keeps only the landmarks referenced by `map`.
pub fn select_with(set: &LandmarkSet, map: &DistancePairMap) -> Result<LandmarkSet> {
    let points = map
        .labels()
        .into_iter()
        .map(|label| {
            set.get(label)
                .copied()
                .ok_or(Error::IncompleteLandmarkSet(label))
        })
        .collect::<Result<Vec<_>>>()?;
    LandmarkSet::new(points, set.image_size())
}
