//! Corpus directories.
//!
//! Images live in `image_dir/{train,test}/NAME.{png,jpg,jpeg}` and their
//! landmarks in `landmark_dir/{train,test}/NAME.{txt,pts}`. Without `train`
//! and `test` subdirectories every pair in the top level goes to training.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use earmatch_core::anthro::FRAME_SIZE;
use earmatch_core::dataset::{reframe_to_ear, Corpus, Sample};

use crate::fsutil::{file_stem, list_files};
use crate::imageio::{read_image, write_png, IMAGE_EXTENSIONS};
use crate::landmarks::{read_landmarks, write_landmarks};
use crate::tables::write_table;
use crate::{par, Error, Result};

pub const LANDMARK_EXTENSIONS: [&str; 2] = ["txt", "pts"];

/// A skipped file and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub issues: Vec<LoadIssue>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Border added around the landmark box when an image must be reframed,
    /// as a fraction of the box size per side.
    pub margin: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { margin: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

fn split_dirs(image_dir: &Path, landmark_dir: &Path) -> Vec<(Split, PathBuf, PathBuf)> {
    let has_splits = image_dir.join("train").is_dir() || image_dir.join("test").is_dir();
    if !has_splits {
        return vec![(
            Split::Train,
            image_dir.to_path_buf(),
            landmark_dir.to_path_buf(),
        )];
    }
    [Split::Train, Split::Test]
        .into_iter()
        .map(|s| (s, image_dir.join(s.as_str()), landmark_dir.join(s.as_str())))
        .filter(|(_, i, _)| i.is_dir())
        .collect()
}

/// Loads one pair. Images already 224×224 with every landmark in frame are
/// kept as they are; anything else is reframed around its landmarks.
fn load_pair(image: &Path, landmarks: &Path, id: &str, options: &LoadOptions) -> Result<Sample> {
    let raster = read_image(image)?;
    let size = (raster.width(), raster.height());
    let set = read_landmarks(landmarks, size)?;
    if !set.is_complete() {
        return Err(Error::Core(earmatch_core::Error::WrongLandmarkCount(
            set.len(),
        )));
    }
    if size == (FRAME_SIZE, FRAME_SIZE) && set.out_of_frame().is_empty() {
        Ok(Sample::new(raster, set, id)?)
    } else {
        Ok(reframe_to_ear(&raster, &set, options.margin, id)?)
    }
}

pub fn load_corpus(
    image_dir: &Path,
    landmark_dir: &Path,
    options: &LoadOptions,
) -> Result<(Corpus, LoadReport)> {
    if !image_dir.is_dir() {
        return Err(Error::Config(format!(
            "image directory {} does not exist",
            image_dir.display()
        )));
    }
    if !landmark_dir.is_dir() {
        return Err(Error::Config(format!(
            "landmark directory {} does not exist",
            landmark_dir.display()
        )));
    }
    let mut corpus = Corpus::default();
    let mut report = LoadReport::default();
    let mut train_ids = HashSet::new();
    for (split, img_dir, lm_dir) in split_dirs(image_dir, landmark_dir) {
        let images: BTreeMap<String, PathBuf> = list_files(&img_dir, &IMAGE_EXTENSIONS)?
            .into_iter()
            .map(|p| (file_stem(&p), p))
            .collect();
        let marks: BTreeMap<String, PathBuf> = if lm_dir.is_dir() {
            list_files(&lm_dir, &LANDMARK_EXTENSIONS)?
                .into_iter()
                .map(|p| (file_stem(&p), p))
                .collect()
        } else {
            BTreeMap::new()
        };
        for (id, path) in &marks {
            if !images.contains_key(id) {
                report.issues.push(LoadIssue {
                    path: path.clone(),
                    detail: "no matching image".into(),
                });
            }
        }
        let mut pairs = Vec::new();
        for (id, img) in &images {
            match marks.get(id) {
                None => report.issues.push(LoadIssue {
                    path: img.clone(),
                    detail: "no matching landmark file".into(),
                }),
                Some(_) if split == Split::Test && train_ids.contains(id) => {
                    report.issues.push(LoadIssue {
                        path: img.clone(),
                        detail: format!("{id} is already in the training split"),
                    })
                }
                Some(lm) => pairs.push((id.clone(), img.clone(), lm.clone())),
            }
        }
        let loaded = par::map(&pairs, |(id, img, lm)| load_pair(img, lm, id, options));
        for ((id, img, lm), result) in pairs.into_iter().zip(loaded) {
            match result {
                Ok(sample) => {
                    report.loaded += 1;
                    match split {
                        Split::Train => {
                            train_ids.insert(id);
                            corpus.train.push(sample);
                        }
                        Split::Test => corpus.test.push(sample),
                    }
                }
                Err(e) => {
                    let path = if matches!(e, Error::Image { .. }) {
                        img
                    } else {
                        lm
                    };
                    report.issues.push(LoadIssue {
                        path,
                        detail: e.to_string(),
                    });
                }
            }
        }
    }
    if report.loaded == 0 {
        return Err(earmatch_core::Error::EmptyCorpus.into());
    }
    Ok((corpus, report))
}

/// One written sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenSample {
    pub split: Split,
    pub source_id: String,
    pub image_path: PathBuf,
    pub landmark_path: PathBuf,
}

/// Writes a corpus in the layout [`load_corpus`] reads, under
/// `out/images` and `out/landmarks`, plus `out/manifest.csv`.
pub fn write_corpus(corpus: &Corpus, out: &Path) -> Result<Vec<WrittenSample>> {
    let jobs: Vec<(Split, &Sample)> = corpus
        .train
        .iter()
        .map(|s| (Split::Train, s))
        .chain(corpus.test.iter().map(|s| (Split::Test, s)))
        .collect();
    let written = par::map(&jobs, |(split, sample)| -> Result<WrittenSample> {
        let id = sample.source_id();
        let image_path = out
            .join("images")
            .join(split.as_str())
            .join(format!("{id}.png"));
        let landmark_path = out
            .join("landmarks")
            .join(split.as_str())
            .join(format!("{id}.txt"));
        write_png(&image_path, sample.image())?;
        write_landmarks(&landmark_path, sample.landmarks())?;
        Ok(WrittenSample {
            split: *split,
            source_id: id.to_string(),
            image_path,
            landmark_path,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_table(
        &out.join("manifest.csv"),
        &["split", "source_id", "image_path", "landmark_path"],
        written.iter().map(|w| {
            vec![
                w.split.as_str().to_string(),
                w.source_id.clone(),
                w.image_path.display().to_string(),
                w.landmark_path.display().to_string(),
            ]
        }),
    )?;
    Ok(written)
}
