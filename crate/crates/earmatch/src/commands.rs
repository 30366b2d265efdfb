//! The pipeline stages behind each subcommand.

use std::collections::HashMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use earmatch_core::anthro::{
    measure_distances, select_relevant, AnthroVector, DistancePairMap, Landmark, MeasureWarning,
    DISTANCE_COUNT, FRAME_SIZE,
};
use earmatch_core::calibration::{
    average_factors, factors_from_reference, load_reference_factors, to_centimetres,
    CalibrationRecord, ConversionFactors, ReferenceDistance,
};
use earmatch_core::dataset::{expand_corpus, Corpus, Sample};
use earmatch_core::matcher::{best_match_with, MatchOptions};
use earmatch_core::net::{
    evaluate, evaluate_predictions, image_to_input, landmarks_to_target, predict_landmarks, train,
    Evaluation, Model, SampleExamples, Tensor, TrainHistory,
};

use crate::annotation::{list_annotations, read_annotation};
use crate::config::{FactorSource, PipelineConfig};
use crate::corpus::{load_corpus, write_corpus, LoadReport, Split};
use crate::error::StageExt;
use crate::hrtf::resolve_hrtf;
use crate::imageio::read_image;
use crate::model_file::{load_model, save_model};
use crate::render::{batch_render, RenderReport};
use crate::report::{ranking, FactorsReport, MatchReport, PointReport};
use crate::tables::{
    read_cm_table, read_database, read_factors, write_calibration, write_factors, write_history,
    write_table,
};
use crate::{server, Error, Result};

fn log_issues(log: &mut dyn Write, report: &LoadReport) {
    for issue in &report.issues {
        let _ = writeln!(log, "skipped {}: {}", issue.path.display(), issue.detail);
    }
}

fn load_configured_corpus(cfg: &PipelineConfig, log: &mut dyn Write) -> Result<Corpus> {
    let images = cfg.require_path("corpus_images", &cfg.corpus_images, true)?;
    let landmarks = cfg.require_path("corpus_landmarks", &cfg.corpus_landmarks, true)?;
    let (corpus, report) = load_corpus(&images, &landmarks, &cfg.load).stage("load-corpus")?;
    log_issues(log, &report);
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub history: TrainHistory,
    pub model_path: PathBuf,
    pub history_path: PathBuf,
    pub samples: usize,
}

/// Trains on the training split (first `limit` samples, optionally ×6
/// augmented) and writes the model file and a per-epoch history CSV.
pub fn cmd_train(
    cfg: &PipelineConfig,
    model_out: &Path,
    history_out: &Path,
    log: &mut dyn Write,
) -> Result<TrainOutput> {
    let mut corpus = load_configured_corpus(cfg, log)?;
    if let Some(n) = cfg.limit {
        corpus.train.truncate(n);
    }
    corpus.test.clear();
    if cfg.augment {
        corpus = expand_corpus(&corpus, &cfg.augmentation).stage("augment")?;
    }
    if corpus.train.is_empty() {
        return Err(earmatch_core::Error::EmptyCorpus).stage("train");
    }
    let mut model = Model::build(
        cfg.architecture.input(),
        &cfg.architecture.specs(),
        cfg.train.seed,
    )
    .stage("build-model")?;
    let _ = writeln!(log, "{} samples={}", cfg.train_header(), corpus.train.len());
    let examples = SampleExamples {
        samples: &corpus.train,
        input_shape: model.input_shape(),
    };
    let history = train(&mut model, &examples, &cfg.train, |r| {
        let _ = writeln!(
            log,
            "epoch={} loss={} radial_error_px={}",
            r.epoch, r.loss, r.radial_error_px
        );
    })
    .stage("train")?;
    save_model(model_out, &model).stage("save-model")?;
    write_history(history_out, &history).stage("write-history")?;
    Ok(TrainOutput {
        history,
        model_path: model_out.to_path_buf(),
        history_path: history_out.to_path_buf(),
        samples: corpus.train.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchInput {
    Image(PathBuf),
    /// A measured vector in centimetres; skips the model and factors.
    Vector([f64; DISTANCE_COUNT]),
}

fn configured_factors(cfg: &PipelineConfig) -> Result<ConversionFactors> {
    match &cfg.factors {
        Some(FactorSource::Preset) => Ok(load_reference_factors()),
        Some(FactorSource::File(p)) => {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "factors: file {} does not exist",
                    p.display()
                )));
            }
            read_factors(p)
        }
        None => Err(Error::Config(
            "factors is not set (a CSV path or \"preset\")".into(),
        )),
    }
}

fn warning_text(w: &MeasureWarning) -> String {
    match w {
        MeasureWarning::AllZero => "all distances are zero".into(),
        MeasureWarning::ExceedsUnit(j) => format!("d{j} exceeds the normalized frame"),
    }
}

/// Predicts, measures, converts and matches. A reference distance (points
/// in the input image's own pixels) overrides the configured factors.
pub fn cmd_match(
    cfg: &PipelineConfig,
    input: &MatchInput,
    reference: Option<&ReferenceDistance>,
) -> Result<MatchReport> {
    let db_path = cfg.require_path("database", &cfg.database, false)?;
    let db = read_database(&db_path).stage("load-database")?;
    let mut warnings = Vec::new();

    let (query, px_vector, factors, landmarks, image_path) = match input {
        MatchInput::Vector(v) => (
            AnthroVector::query(*v).stage("query")?,
            None,
            None,
            None,
            None,
        ),
        MatchInput::Image(path) => {
            let model_path = cfg.require_path("model", &cfg.model, false)?;
            let model = load_model(&model_path).stage("load-model")?;
            let mut image = read_image(path).stage("read-image")?;
            let (w, h) = (image.width(), image.height());
            if (w, h) != (FRAME_SIZE, FRAME_SIZE) {
                warnings.push(format!("image resized from {w}x{h} to 224x224"));
                image = image.resize(FRAME_SIZE, FRAME_SIZE);
            }
            let factors = match reference {
                Some(r) => {
                    let (sx, sy) = (FRAME_SIZE as f64 / w as f64, FRAME_SIZE as f64 / h as f64);
                    let scale = |p: &Landmark| Landmark::new(p.label, p.x * sx, p.y * sy);
                    let framed = ReferenceDistance {
                        point_a: scale(&r.point_a).stage("reference-distance")?,
                        point_b: scale(&r.point_b).stage("reference-distance")?,
                        physical_length_cm: r.physical_length_cm,
                    };
                    factors_from_reference(&framed, (FRAME_SIZE, FRAME_SIZE))
                        .stage("reference-distance")?
                }
                None => configured_factors(cfg).stage("load-factors")?,
            };
            let predicted = predict_landmarks(&model, &image).stage("predict")?;
            let selected = select_relevant(&predicted).stage("select")?;
            let px = measure_distances(&selected, &DistancePairMap::PINNA).stage("measure")?;
            warnings.extend(px.warnings().iter().map(warning_text));
            let cm = to_centimetres(&px, &factors).stage("convert")?;
            let points = selected
                .points()
                .iter()
                .map(|p| PointReport {
                    label: p.label,
                    x: p.x,
                    y: p.y,
                })
                .collect();
            (
                cm,
                Some(px.0),
                Some(factors),
                Some(points),
                Some(path.display().to_string()),
            )
        }
    };

    let options = MatchOptions {
        side: cfg.side_filter,
        ..Default::default()
    };
    let result = best_match_with(&query, &db, &options).stage("match")?;
    let best = result.best();
    if let Err(e) = resolve_hrtf(best.record, db_path.parent()) {
        if best.record.hrtf_ref.is_some() {
            warnings.push(e.to_string());
        }
    }
    Ok(MatchReport {
        input: if image_path.is_some() {
            "image"
        } else {
            "vector"
        }
        .into(),
        image_path,
        landmarks,
        px_vector,
        cm_vector: *query.values(),
        factors: factors.as_ref().map(FactorsReport::from),
        subject_id: best.record.subject_id.clone(),
        side: best.record.side.as_str().into(),
        distance: best.distance,
        hrtf_ref: best.record.hrtf_ref.clone(),
        ranking: ranking(&result, cfg.top_k),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateOutput {
    pub factors: ConversionFactors,
    pub records: Vec<CalibrationRecord>,
    /// Ears present in only one input, or whose landmarks could not be
    /// measured, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Averages per-ear factors over every ear present both as an annotation
/// (ear id = image id) and as a row of the centimetre table.
pub fn cmd_calibrate(
    annotations_dir: &Path,
    cm_table: &Path,
    out: &Path,
    records_out: Option<&Path>,
) -> Result<CalibrateOutput> {
    if !annotations_dir.is_dir() {
        return Err(Error::Config(format!(
            "annotations directory {} does not exist",
            annotations_dir.display()
        )));
    }
    if !cm_table.is_file() {
        return Err(Error::Config(format!(
            "cm table {} does not exist",
            cm_table.display()
        )));
    }
    let cm_rows = read_cm_table(cm_table).stage("read-cm-table")?;
    let annotated = list_annotations(annotations_dir).stage("list-annotations")?;
    let cm_ids: HashMap<&str, &AnthroVector> =
        cm_rows.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let mut skipped: Vec<(String, String)> = annotated
        .iter()
        .filter(|id| !cm_ids.contains_key(id.as_str()))
        .map(|id| (id.clone(), "no row in the cm table".to_string()))
        .collect();
    let mut records = Vec::new();
    for (id, cm) in &cm_rows {
        if !annotated.contains(id) {
            skipped.push((id.clone(), "no annotation".into()));
            continue;
        }
        let measured = read_annotation(annotations_dir, id)
            .and_then(|a| a.landmark_set((FRAME_SIZE, FRAME_SIZE)))
            .and_then(|set| Ok(measure_distances(&set, &DistancePairMap::PINNA)?));
        match measured {
            Ok(px) => records.push(CalibrationRecord {
                ear_id: id.clone(),
                cm: *cm,
                px,
            }),
            Err(e) => skipped.push((id.clone(), e.to_string())),
        }
    }
    let factors = average_factors(&records).stage("average")?;
    write_factors(out, &factors).stage("write-factors")?;
    if let Some(path) = records_out {
        write_calibration(path, &records).stage("write-records")?;
    }
    Ok(CalibrateOutput {
        factors,
        records,
        skipped,
    })
}

pub fn cmd_render(cfg: &PipelineConfig, mesh_dir: &Path, out_dir: &Path) -> Result<RenderReport> {
    if !mesh_dir.is_dir() {
        return Err(Error::Config(format!(
            "mesh directory {} does not exist",
            mesh_dir.display()
        )));
    }
    batch_render(mesh_dir, &cfg.render, out_dir).stage("render")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOutput {
    pub before: (usize, usize),
    pub after: (usize, usize),
}

/// Loads the corpus, expands it ×6 and writes it with suffix-tagged names.
pub fn cmd_augment(
    cfg: &PipelineConfig,
    out_dir: &Path,
    log: &mut dyn Write,
) -> Result<AugmentOutput> {
    let corpus = load_configured_corpus(cfg, log)?;
    let expanded = expand_corpus(&corpus, &cfg.augmentation).stage("augment")?;
    write_corpus(&expanded, out_dir).stage("write-corpus")?;
    Ok(AugmentOutput {
        before: corpus.sizes(),
        after: expanded.sizes(),
    })
}

/// Inference-mode metrics of the configured model on one split, with an
/// optional per-sample CSV.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    split: Split,
    per_sample: Option<&Path>,
    log: &mut dyn Write,
) -> Result<Evaluation> {
    let model_path = cfg.require_path("model", &cfg.model, false)?;
    let model = load_model(&model_path).stage("load-model")?;
    let corpus = load_configured_corpus(cfg, log)?;
    let samples: &[Sample] = match split {
        Split::Train => &corpus.train,
        Split::Test => &corpus.test,
    };
    let examples = SampleExamples {
        samples,
        input_shape: model.input_shape(),
    };
    let eval = evaluate(&model, &examples, cfg.pck_px).stage("evaluate")?;
    if let Some(path) = per_sample {
        let rows = samples
            .iter()
            .map(|s| -> Result<Vec<String>> {
                let x = Tensor::from_vec(
                    1,
                    model.input_shape(),
                    image_to_input(s.image(), model.input_shape())?,
                )?;
                let pred = model.infer(&x)?.data;
                let e = evaluate_predictions(
                    &[pred],
                    &[landmarks_to_target(s.landmarks())?],
                    cfg.pck_px,
                )?;
                Ok(vec![
                    s.source_id().to_string(),
                    e.loss.to_string(),
                    e.mean_radial_error_px.to_string(),
                    e.pck.to_string(),
                ])
            })
            .collect::<Result<Vec<_>>>()
            .stage("evaluate")?;
        write_table(
            path,
            &["source_id", "mse", "mean_radial_error_px", "pck"],
            rows,
        )
        .stage("write-evaluation")?;
    }
    Ok(eval)
}

/// Serves the annotation tool until the process is stopped.
pub fn cmd_annotate_serve(
    images_dir: &Path,
    annotations_dir: &Path,
    assets_dir: Option<&Path>,
    addr: SocketAddr,
    log: &mut dyn Write,
) -> Result<()> {
    if !images_dir.is_dir() {
        return Err(Error::Config(format!(
            "images directory {} does not exist",
            images_dir.display()
        )));
    }
    let service = server::AnnotationService::new(images_dir, annotations_dir, assets_dir);
    let listener = server::bind(addr).stage("bind")?;
    let local = listener
        .local_addr()
        .map_err(|e| Error::io(addr.to_string(), e))?;
    let _ = writeln!(log, "serving annotations on http://{local}");
    server::run_blocking(listener, service).stage("serve")
}
