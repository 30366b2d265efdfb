//! Conversion from normalized pixel distances to centimetres.
//!
//! Each calibration ear contributes `f_j = cm_j / px_j`; averaging over ears
//! gives one factor per distance. A reference segment of known length in
//! the image replaces all seven factors with a single scale.

use crate::anthro::{
    euclidean_distance, AnthroVector, Landmark, PixelDistanceVector, DISTANCE_COUNT, FRAME_SIZE,
    NORMALIZATION_PX,
};
use crate::{Error, Result};

/// Where a set of factors came from. Reported alongside every conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Averaged from calibration records.
    Calibrated,
    /// The published HUTUBS-derived table. It was never validated against
    /// ground truth and should be treated as a stopgap.
    PublishedUnvalidated,
    /// A uniform scale from a reference segment in the image.
    ReferenceDistance,
    /// Read from a factors file of unknown origin.
    Loaded,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Calibrated => "calibrated",
            Provenance::PublishedUnvalidated => "published-unvalidated",
            Provenance::ReferenceDistance => "reference-distance",
            Provenance::Loaded => "loaded",
        }
    }
}

/// Published per-distance factors, d1..d7, in cm per normalized unit.
const PUBLISHED_FACTORS: [f64; DISTANCE_COUNT] = [
    10.129765, 13.442287, 11.625544, 9.539581, 8.621989, 11.824525, 10.532984,
];
/// Published overall average. It differs from the mean of the seven
/// factors above (10.816668) and is kept verbatim.
const PUBLISHED_OVERALL_AVERAGE: f64 = 10.313797;
const PUBLISHED_EAR_COUNT: usize = 116;

/// Cm per normalized-pixel unit for each of d1..d7.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionFactors {
    factors: [f64; DISTANCE_COUNT],
    overall_average: f64,
    n_ears: usize,
    provenance: Provenance,
}

impl ConversionFactors {
    /// Factors with the overall average computed as their mean.
    pub fn new(
        factors: [f64; DISTANCE_COUNT],
        n_ears: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let overall_average = factors.iter().sum::<f64>() / DISTANCE_COUNT as f64;
        Self::with_average(factors, overall_average, n_ears, provenance)
    }

    /// Factors with an explicitly supplied overall average, as stored in a
    /// factors file.
    pub fn with_average(
        factors: [f64; DISTANCE_COUNT],
        overall_average: f64,
        n_ears: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        for (j, &f) in factors.iter().enumerate() {
            if !f.is_finite() {
                return Err(Error::NonFinite(j + 1));
            }
            if f <= 0.0 {
                return Err(Error::NonPositive(j + 1));
            }
        }
        Ok(Self {
            factors,
            overall_average,
            n_ears,
            provenance,
        })
    }

    /// The same scale for every distance.
    pub fn uniform(scale: f64, provenance: Provenance) -> Result<Self> {
        Self::new([scale; DISTANCE_COUNT], 0, provenance)
    }

    pub fn factors(&self) -> &[f64; DISTANCE_COUNT] {
        &self.factors
    }

    pub fn overall_average(&self) -> f64 {
        self.overall_average
    }

    pub fn n_ears(&self) -> usize {
        self.n_ears
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// The published factor table as a built-in preset.
pub fn load_reference_factors() -> ConversionFactors {
    ConversionFactors {
        factors: PUBLISHED_FACTORS,
        overall_average: PUBLISHED_OVERALL_AVERAGE,
        n_ears: PUBLISHED_EAR_COUNT,
        provenance: Provenance::PublishedUnvalidated,
    }
}

/// Ground-truth centimetres and measured normalized distances for one ear.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub ear_id: alloc::string::String,
    pub cm: AnthroVector,
    pub px: PixelDistanceVector,
}

pub fn per_ear_factors(record: &CalibrationRecord) -> Result<[f64; DISTANCE_COUNT]> {
    let mut f = [0.0; DISTANCE_COUNT];
    for (j, slot) in f.iter_mut().enumerate() {
        let px = record.px.0[j];
        if !(px > 0.0 && px.is_finite()) {
            return Err(Error::CalibrationDegenerate(j + 1));
        }
        *slot = record.cm.values()[j] / px;
    }
    Ok(f)
}

/// Per-distance arithmetic mean of the per-ear factors.
pub fn average_factors(records: &[CalibrationRecord]) -> Result<ConversionFactors> {
    if records.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mut sum = [0.0; DISTANCE_COUNT];
    for record in records {
        for (s, f) in sum.iter_mut().zip(per_ear_factors(record)?) {
            *s += f;
        }
    }
    let n = records.len();
    ConversionFactors::new(sum.map(|s| s / n as f64), n, Provenance::Calibrated)
}

pub fn to_centimetres(
    px: &PixelDistanceVector,
    factors: &ConversionFactors,
) -> Result<AnthroVector> {
    let mut cm = [0.0; DISTANCE_COUNT];
    for (j, slot) in cm.iter_mut().enumerate() {
        *slot = px.0[j] * factors.factors[j];
    }
    AnthroVector::query(cm)
}

/// Two image points a known physical length apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDistance {
    pub point_a: Landmark,
    pub point_b: Landmark,
    pub physical_length_cm: f64,
}

/// Cm per normalized unit implied by a reference segment on a 224×224
/// image.
pub fn scale_from_reference(reference: &ReferenceDistance, image_size: (u32, u32)) -> Result<f64> {
    if image_size != (FRAME_SIZE, FRAME_SIZE) {
        return Err(Error::SizeMismatch {
            expected_w: FRAME_SIZE,
            expected_h: FRAME_SIZE,
            width: image_size.0,
            height: image_size.1,
        });
    }
    let len = reference.physical_length_cm;
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidReferenceLength);
    }
    let px = euclidean_distance(&reference.point_a, &reference.point_b)?;
    if px == 0.0 {
        return Err(Error::CoincidentReferencePoints);
    }
    Ok(len / (px / NORMALIZATION_PX))
}

/// Uniform factors from a reference segment. These take precedence over
/// any global factor table.
pub fn factors_from_reference(
    reference: &ReferenceDistance,
    image_size: (u32, u32),
) -> Result<ConversionFactors> {
    ConversionFactors::uniform(
        scale_from_reference(reference, image_size)?,
        Provenance::ReferenceDistance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn record(cm: [f64; 7], px: [f64; 7]) -> CalibrationRecord {
        CalibrationRecord {
            ear_id: "ear".to_string(),
            cm: AnthroVector::new(cm).unwrap(),
            px: PixelDistanceVector(px),
        }
    }

    fn reference(ax: f64, ay: f64, bx: f64, by: f64, len: f64) -> ReferenceDistance {
        ReferenceDistance {
            point_a: Landmark::new(0, ax, ay).unwrap(),
            point_b: Landmark::new(1, bx, by).unwrap(),
            physical_length_cm: len,
        }
    }

    #[test]
    fn per_ear_quotient() {
        let mut cm = [1.0; 7];
        let mut px = [0.5; 7];
        cm[4] = 6.4;
        px[4] = 0.6329;
        let f = per_ear_factors(&record(cm, px)).unwrap();
        assert_eq!(f[4], 6.4 / 0.6329);
        assert!((f[4] - 10.1122).abs() < 1e-4);
    }

    #[test]
    fn identity_factors() {
        let v = [0.3, 0.2, 0.1, 0.4, 0.6, 0.35, 0.05];
        assert_eq!(per_ear_factors(&record(v, v)).unwrap(), [1.0; 7]);
    }

    #[test]
    fn zero_pixel_component_is_degenerate() {
        let mut px = [0.5; 7];
        px[2] = 0.0;
        assert_eq!(
            per_ear_factors(&record([1.0; 7], px)),
            Err(Error::CalibrationDegenerate(3))
        );
    }

    #[test]
    fn averaging() {
        let mut a = record([1.0; 7], [0.1; 7]);
        let b = record([1.2; 7], [0.1; 7]);
        a.ear_id = "a".to_string();
        let f = average_factors(&[a.clone(), b]).unwrap();
        assert!((f.factors()[0] - 11.0).abs() < 1e-12);
        assert_eq!(f.n_ears(), 2);
        assert_eq!(f.provenance(), Provenance::Calibrated);
        let single = average_factors(core::slice::from_ref(&a)).unwrap();
        assert_eq!(*single.factors(), per_ear_factors(&a).unwrap());
        assert_eq!(average_factors(&[]), Err(Error::EmptyCalibration));
    }

    #[test]
    fn published_preset() {
        let f = load_reference_factors();
        assert_eq!(f.factors()[0], 10.129765);
        assert_eq!(f.factors()[6], 10.532984);
        assert_eq!(f.overall_average(), 10.313797);
        assert_eq!(f.n_ears(), 116);
        assert_eq!(f.provenance(), Provenance::PublishedUnvalidated);
        assert!(f.factors().iter().all(|&x| (8.0..=14.0).contains(&x)));
    }

    #[test]
    fn conversion_products() {
        let mut px = [0.1; 7];
        px[4] = 0.6329;
        let cm = to_centimetres(&PixelDistanceVector(px), &load_reference_factors()).unwrap();
        assert_eq!(cm.values()[4], 0.6329 * 8.621989);
        assert!((cm.values()[4] - 5.4569).abs() < 1e-4);
        let ones = ConversionFactors::uniform(1.0, Provenance::Loaded).unwrap();
        assert_eq!(
            to_centimetres(&PixelDistanceVector(px), &ones)
                .unwrap()
                .values(),
            &px
        );
    }

    #[test]
    fn reference_scale() {
        let r = reference(10.0, 20.0, 10.0, 178.0, 2.0);
        assert_eq!(scale_from_reference(&r, (224, 224)).unwrap(), 4.0);
        let r2 = ReferenceDistance {
            physical_length_cm: 4.0,
            ..r
        };
        assert_eq!(scale_from_reference(&r2, (224, 224)).unwrap(), 8.0);
        assert_eq!(
            scale_from_reference(&reference(5.0, 5.0, 5.0, 5.0, 1.0), (224, 224)),
            Err(Error::CoincidentReferencePoints)
        );
        assert_eq!(
            scale_from_reference(&reference(5.0, 5.0, 6.0, 5.0, 0.0), (224, 224)),
            Err(Error::InvalidReferenceLength)
        );
        let f = factors_from_reference(&r, (224, 224)).unwrap();
        assert_eq!(*f.factors(), [4.0; 7]);
        assert_eq!(f.provenance(), Provenance::ReferenceDistance);
    }

    #[test]
    fn ruler_image_recovers_ground_truth() {
        // A synthetic ear drawn at 30 px per cm, with a 2 cm ruler next to it.
        let px_per_cm = 30.0;
        let truth_cm = [1.9, 1.1, 1.7, 1.4, 6.1, 3.2, 0.6];
        let ruler = reference(12.0, 200.0, 12.0 + 2.0 * px_per_cm, 200.0, 2.0);
        let px = PixelDistanceVector(truth_cm.map(|c| c * px_per_cm / NORMALIZATION_PX));
        let cm = to_centimetres(&px, &factors_from_reference(&ruler, (224, 224)).unwrap()).unwrap();
        for (got, want) in cm.values().iter().zip(truth_cm) {
            assert!((got - want).abs() <= 0.01 * want);
        }
    }

    fn positive7() -> impl Strategy<Value = [f64; 7]> {
        proptest::array::uniform7(0.05..5.0f64)
    }

    proptest! {
        #[test]
        fn factors_then_conversion_is_identity(cm in positive7(), px in proptest::array::uniform7(0.01..1.0f64)) {
            let rec = record(cm, px);
            let f = ConversionFactors::new(per_ear_factors(&rec).unwrap(), 1, Provenance::Calibrated).unwrap();
            let back = to_centimetres(&rec.px, &f).unwrap();
            for (b, c) in back.values().iter().zip(cm) {
                prop_assert!((b - c).abs() < 1e-12 * c.max(1.0));
            }
        }

        #[test]
        fn averaging_is_permutation_invariant(rows in proptest::collection::vec((positive7(), proptest::array::uniform7(0.01..1.0f64)), 1..12), seed in any::<u64>()) {
            let records: Vec<_> = rows.iter().map(|(c, p)| record(*c, *p)).collect();
            let mut shuffled = records.clone();
            let n = shuffled.len();
            // Fisher-Yates with a small LCG so the permutation comes from the seed.
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = average_factors(&records).unwrap();
            let b = average_factors(&shuffled).unwrap();
            for j in 0..7 {
                prop_assert!((a.factors()[j] - b.factors()[j]).abs() <= 1e-12 * a.factors()[j]);
            }
            prop_assert!((a.overall_average() - a.factors().iter().sum::<f64>() / 7.0).abs() < 1e-6);
        }

        #[test]
        fn reference_scale_rotation_invariant(len in 5.0..100.0f64, theta in 0.0..std::f64::consts::TAU, cm in 0.1..5.0f64) {
            let (cx, cy) = (112.0, 112.0);
            let r0 = reference(cx - len / 2.0, cy, cx + len / 2.0, cy, cm);
            let (s, c) = (libm::sin(theta), libm::cos(theta));
            let r1 = reference(cx - c * len / 2.0, cy - s * len / 2.0, cx + c * len / 2.0, cy + s * len / 2.0, cm);
            let a = scale_from_reference(&r0, (224, 224)).unwrap();
            let b = scale_from_reference(&r1, (224, 224)).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
