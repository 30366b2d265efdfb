use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] earmatch_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{}: image: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("corrupt STL: header declares {declared} triangles but the file holds {found}")]
    CorruptStl { declared: u32, found: usize },

    #[error("{}: not a recognised {kind} file", path.display())]
    UnknownFormat { path: PathBuf, kind: &'static str },

    #[error("model file version {found} is not supported (expected {supported})")]
    ModelVersion { found: u32, supported: u32 },

    #[error("model file truncated: needs {needed} bytes, has {available}")]
    ModelTruncated { needed: usize, available: usize },

    #[error("model file checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ModelChecksum { stored: u32, computed: u32 },

    #[error("model file manifest: {0}")]
    ModelManifest(String),

    #[error("{}:{line}: duplicate record for {subject_id} {side}", path.display())]
    DuplicateRow {
        path: PathBuf,
        line: usize,
        subject_id: String,
        side: &'static str,
    },

    #[error("best match {subject_id} {side} has no HRTF reference")]
    NoHrtfAttached {
        subject_id: String,
        side: &'static str,
    },

    #[error("HRTF file {} does not exist", .0.display())]
    HrtfNotFound(PathBuf),

    #[error("invalid annotation: {0}")]
    Annotation(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems with the invocation or configuration rather than
    /// with a pipeline stage.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            1
        }
    }
}

/// Tags errors with the pipeline stage that produced them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
