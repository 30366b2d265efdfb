//! Training samples: reframing around the ear and the five joint
//! image/landmark augmentations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::anthro::{LandmarkSet, FRAME_SIZE};
use crate::raster::Raster;
use crate::{Error, Result};

/// A 224×224 ear image and its landmarks in the same frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    image: Raster,
    landmarks: LandmarkSet,
    source_id: String,
}

impl Sample {
    pub fn new(
        image: Raster,
        landmarks: LandmarkSet,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        for (w, h) in [(image.width(), image.height()), landmarks.image_size()] {
            if (w, h) != (FRAME_SIZE, FRAME_SIZE) {
                return Err(Error::SizeMismatch {
                    expected_w: FRAME_SIZE,
                    expected_h: FRAME_SIZE,
                    width: w,
                    height: h,
                });
            }
        }
        Ok(Self {
            image,
            landmarks,
            source_id: source_id.into(),
        })
    }

    pub fn image(&self) -> &Raster {
        &self.image
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Corpus {
    pub fn sizes(&self) -> (usize, usize) {
        (self.train.len(), self.test.len())
    }
}

/// Crops the landmark bounding box, grown by `margin` times its size on each
/// side, and stretches it to 224×224. Width and height scale independently.
pub fn reframe_to_ear(
    image: &Raster,
    landmarks: &LandmarkSet,
    margin: f64,
    source_id: &str,
) -> Result<Sample> {
    let (x0, y0, x1, y1) = landmarks.bounding_box().ok_or(Error::DegenerateBox)?;
    let (bw, bh) = (x1 - x0, y1 - y0);
    if !(bw > 0.0 && bh > 0.0) {
        return Err(Error::DegenerateBox);
    }
    let left = x0 - margin * bw;
    let top = y0 - margin * bh;
    let box_w = bw * (1.0 + 2.0 * margin);
    let box_h = bh * (1.0 + 2.0 * margin);
    let size = FRAME_SIZE as f64;
    let (sx, sy) = (size / box_w, size / box_h);
    let frame = image.resample(FRAME_SIZE, FRAME_SIZE, |i, j| (left + i / sx, top + j / sy));
    let lms = landmarks.map_points((FRAME_SIZE, FRAME_SIZE), |x, y| {
        ((x - left) * sx, (y - top) * sy)
    })?;
    Sample::new(frame, lms, source_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Flip,
    RotLeft,
    RotRight,
    FlipRotLeft,
    FlipRotRight,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::Flip,
        AugmentKind::RotLeft,
        AugmentKind::RotRight,
        AugmentKind::FlipRotLeft,
        AugmentKind::FlipRotRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentKind::Flip => "flip",
            AugmentKind::RotLeft => "rot_left",
            AugmentKind::RotRight => "rot_right",
            AugmentKind::FlipRotLeft => "flip_rot_left",
            AugmentKind::FlipRotRight => "flip_rot_right",
        }
    }

    /// File-name suffix for augmented copies.
    pub fn suffix(&self) -> &'static str {
        match self {
            AugmentKind::Flip => "_f",
            AugmentKind::RotLeft => "_rl",
            AugmentKind::RotRight => "_rr",
            AugmentKind::FlipRotLeft => "_frl",
            AugmentKind::FlipRotRight => "_frr",
        }
    }

    fn flips(&self) -> bool {
        matches!(
            self,
            AugmentKind::Flip | AugmentKind::FlipRotLeft | AugmentKind::FlipRotRight
        )
    }

    /// Rotation sign: +1 counter-clockwise on screen, −1 clockwise.
    fn turn(&self) -> f64 {
        match self {
            AugmentKind::Flip => 0.0,
            AugmentKind::RotLeft | AugmentKind::FlipRotLeft => 1.0,
            AugmentKind::RotRight | AugmentKind::FlipRotRight => -1.0,
        }
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown augmentation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipAxis {
    /// Mirror about the vertical axis, `x → width − 1 − x`.
    #[default]
    Vertical,
    /// Upside down, `y → height − 1 − y`.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub angle_deg: f64,
    pub flip_axis: FlipAxis,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            angle_deg: 15.0,
            flip_axis: FlipAxis::Vertical,
        }
    }
}

/// Forward point map of an augmentation on a 224×224 frame, plus its
/// inverse for resampling.
#[derive(Debug, Clone, Copy)]
struct FrameTransform {
    flip: Option<FlipAxis>,
    cos: f64,
    sin: f64,
}

const CENTER: f64 = (FRAME_SIZE as f64 - 1.0) / 2.0;
const LAST: f64 = FRAME_SIZE as f64 - 1.0;

impl FrameTransform {
    fn new(kind: AugmentKind, config: &AugmentConfig) -> Self {
        let theta = kind.turn() * config.angle_deg.to_radians();
        Self {
            flip: kind.flips().then_some(config.flip_axis),
            cos: libm::cos(theta),
            sin: libm::sin(theta),
        }
    }

    fn flip(&self, x: f64, y: f64) -> (f64, f64) {
        match self.flip {
            None => (x, y),
            Some(FlipAxis::Vertical) => (LAST - x, y),
            Some(FlipAxis::Horizontal) => (x, LAST - y),
        }
    }

    /// Screen rotation with y pointing down: counter-clockwise for sin > 0.
    fn rotate(&self, x: f64, y: f64, sin: f64) -> (f64, f64) {
        let (dx, dy) = (x - CENTER, y - CENTER);
        (
            CENTER + dx * self.cos + dy * sin,
            CENTER - dx * sin + dy * self.cos,
        )
    }

    fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        let (x, y) = self.flip(x, y);
        self.rotate(x, y, self.sin)
    }

    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let (x, y) = self.rotate(x, y, -self.sin);
        self.flip(x, y)
    }
}

/// Applies one augmentation to image and landmarks together.
pub fn augment(sample: &Sample, kind: AugmentKind, config: &AugmentConfig) -> Result<Sample> {
    let t = FrameTransform::new(kind, config);
    let image = sample
        .image
        .resample(FRAME_SIZE, FRAME_SIZE, |x, y| t.inverse(x, y));
    let landmarks = sample
        .landmarks
        .map_points((FRAME_SIZE, FRAME_SIZE), |x, y| t.forward(x, y))?;
    Sample::new(
        image,
        landmarks,
        format!("{}{}", sample.source_id, kind.suffix()),
    )
}

/// Each sample followed by its five augmented variants, so both splits grow
/// exactly sixfold.
pub fn expand_corpus(corpus: &Corpus, config: &AugmentConfig) -> Result<Corpus> {
    let expand = |samples: &[Sample]| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(samples.len() * 6);
        for s in samples {
            out.push(s.clone());
            for kind in AugmentKind::ALL {
                out.push(augment(s, kind, config)?);
            }
        }
        Ok(out)
    };
    Ok(Corpus {
        train: expand(&corpus.train)?,
        test: expand(&corpus.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anthro::{euclidean_distance, Landmark};
    use alloc::vec;
    use proptest::prelude::*;

    fn set(points: &[(u8, f64, f64)], size: (u32, u32)) -> LandmarkSet {
        LandmarkSet::new(
            points
                .iter()
                .map(|&(l, x, y)| Landmark::new(l, x, y).unwrap())
                .collect(),
            size,
        )
        .unwrap()
    }

    fn textured() -> Raster {
        let mut r = Raster::new(224, 224);
        for y in 0..224u32 {
            for x in 0..224u32 {
                r.put(
                    x,
                    y,
                    [(x % 256) as u8, (y % 256) as u8, ((x * y) % 251) as u8],
                );
            }
        }
        r
    }

    fn sample_with(points: &[(u8, f64, f64)]) -> Sample {
        Sample::new(textured(), set(points, (224, 224)), "s").unwrap()
    }

    #[test]
    fn reframe_maps_box_corners() {
        let img = Raster::new(300, 300);
        let lms = set(
            &[(0, 10.0, 20.0), (1, 110.0, 220.0), (2, 60.0, 120.0)],
            (300, 300),
        );
        let s = reframe_to_ear(&img, &lms, 0.0, "x").unwrap();
        let p = s.landmarks().points();
        let want = [(0.0, 0.0), (224.0, 224.0), (112.0, 112.0)];
        for (q, w) in p.iter().zip(want) {
            assert!(
                (q.x - w.0).abs() < 1e-12 && (q.y - w.1).abs() < 1e-12,
                "{q:?}"
            );
        }
    }

    #[test]
    fn reframe_square_box_is_uniform() {
        let img = Raster::new(400, 400);
        let lms = set(
            &[(0, 50.0, 50.0), (1, 150.0, 150.0), (2, 70.0, 130.0)],
            (400, 400),
        );
        let s = reframe_to_ear(&img, &lms, 0.1, "x").unwrap();
        let p = s.landmarks().points();
        let sx = (p[2].x - p[0].x) / 20.0;
        let sy = (p[2].y - p[0].y) / 80.0;
        assert!((sx - sy).abs() < 1e-12);
    }

    #[test]
    fn reframe_degenerate_box() {
        let lms = set(&[(0, 10.0, 20.0), (1, 10.0, 90.0)], (300, 300));
        assert_eq!(
            reframe_to_ear(&Raster::new(300, 300), &lms, 0.1, "x"),
            Err(Error::DegenerateBox)
        );
    }

    #[test]
    fn reframe_image_follows_landmarks() {
        // A single bright pixel at a landmark must land where the landmark
        // lands in the new frame.
        let mut img = Raster::new(500, 400);
        img.put(200, 150, [255, 255, 255]);
        let lms = set(
            &[(0, 88.0, 38.0), (1, 312.0, 262.0), (2, 200.0, 150.0)],
            (500, 400),
        );
        let s = reframe_to_ear(&img, &lms, 0.0, "x").unwrap();
        let p = s.landmarks().points()[2];
        assert_eq!((p.x, p.y), (112.0, 112.0));
        assert_eq!(s.image().get(112, 112), [255; 3]);
    }

    #[test]
    fn flip_formula_and_center_fixed_point() {
        let s = sample_with(&[(0, 10.0, 20.0), (1, 111.5, 111.5)]);
        let f = augment(&s, AugmentKind::Flip, &AugmentConfig::default()).unwrap();
        let p = f.landmarks().points();
        assert_eq!((p[0].x, p[0].y), (213.0, 20.0));
        for kind in [AugmentKind::RotLeft, AugmentKind::RotRight] {
            let r = augment(&s, kind, &AugmentConfig::default()).unwrap();
            let c = r.landmarks().points()[1];
            assert!((c.x - 111.5).abs() < 1e-12 && (c.y - 111.5).abs() < 1e-12);
        }
        assert_eq!(f.source_id(), "s_f");
    }

    #[test]
    fn flip_twice_recovers_image_and_landmarks() {
        let s = sample_with(&[(0, 10.25, 20.5), (1, 200.0, 3.0)]);
        let cfg = AugmentConfig::default();
        let ff = augment(
            &augment(&s, AugmentKind::Flip, &cfg).unwrap(),
            AugmentKind::Flip,
            &cfg,
        )
        .unwrap();
        for (a, b) in ff.landmarks().points().iter().zip(s.landmarks().points()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
        assert_eq!(ff.image(), s.image());
        // Independent check of one mirrored pixel.
        let f = augment(&s, AugmentKind::Flip, &cfg).unwrap();
        assert_eq!(f.image().get(0, 7), s.image().get(223, 7));
    }

    #[test]
    fn rotation_direction_on_screen() {
        // Left rotation turns a point right of centre upward (smaller y).
        let s = sample_with(&[(0, 211.5, 111.5)]);
        let cfg = AugmentConfig {
            angle_deg: 90.0,
            ..Default::default()
        };
        let p = augment(&s, AugmentKind::RotLeft, &cfg)
            .unwrap()
            .landmarks()
            .points()[0];
        assert!((p.x - 111.5).abs() < 1e-9 && (p.y - 11.5).abs() < 1e-9);
    }

    #[test]
    fn rotated_image_tracks_landmark() {
        let mut img = Raster::new(224, 224);
        for y in 60..64 {
            for x in 150..154 {
                img.put(x, y, [255, 0, 0]);
            }
        }
        let s = Sample::new(img, set(&[(0, 151.5, 61.5)], (224, 224)), "s").unwrap();
        for kind in AugmentKind::ALL {
            let a = augment(&s, kind, &AugmentConfig::default()).unwrap();
            let p = a.landmarks().points()[0];
            let px = a
                .image()
                .get(libm::round(p.x) as u32, libm::round(p.y) as u32);
            assert!(px[0] > 200, "{kind:?} lost the marker: {px:?}");
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(matches!(
            "shear".parse::<AugmentKind>(),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(
            "flip_rot_right".parse::<AugmentKind>().unwrap(),
            AugmentKind::FlipRotRight
        );
    }

    #[test]
    fn expansion_sizes() {
        let s = sample_with(&[(0, 1.0, 2.0)]);
        let c = Corpus {
            train: vec![s],
            test: vec![],
        };
        let e = expand_corpus(&c, &AugmentConfig::default()).unwrap();
        assert_eq!(e.sizes(), (6, 0));
        let ids: Vec<_> = e.train.iter().map(|s| s.source_id()).collect();
        assert_eq!(ids, ["s", "s_f", "s_rl", "s_rr", "s_frl", "s_frr"]);
    }

    proptest! {
        #[test]
        fn augmentations_are_isometries(pts in proptest::collection::vec((20.0..200.0f64, 20.0..200.0f64), 3), angle in 0.0..45.0f64) {
            let labelled: Vec<_> = pts.iter().enumerate().map(|(i, &(x, y))| (i as u8, x, y)).collect();
            let s = sample_with(&labelled);
            let cfg = AugmentConfig { angle_deg: angle, ..Default::default() };
            let d = |s: &Sample, i: usize, j: usize| {
                let p = s.landmarks().points();
                euclidean_distance(&p[i], &p[j]).unwrap()
            };
            for kind in AugmentKind::ALL {
                let a = augment(&s, kind, &cfg).unwrap();
                for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                    prop_assert!((d(&a, i, j) - d(&s, i, j)).abs() < 1e-9);
                }
            }
            let back = augment(&augment(&s, AugmentKind::RotLeft, &cfg).unwrap(), AugmentKind::RotRight, &cfg).unwrap();
            for (a, b) in back.landmarks().points().iter().zip(s.landmarks().points()) {
                prop_assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
            }
        }
    }
}
