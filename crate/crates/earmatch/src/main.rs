use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use earmatch::commands::{
    cmd_annotate_serve, cmd_augment, cmd_calibrate, cmd_evaluate, cmd_match, cmd_render, cmd_train,
    MatchInput,
};
use earmatch::config::PipelineConfig;
use earmatch::corpus::Split;
use earmatch::fsutil::write_atomic;
use earmatch::{Error, Result};
use earmatch_core::anthro::{Landmark, DISTANCE_COUNT};
use earmatch_core::calibration::ReferenceDistance;

#[derive(Parser)]
#[command(
    name = "earmatch",
    version,
    about = "Ear landmarks to a best-matching HRTF subject"
)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train the landmark network.
    Train {
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        history_out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Match an ear image or a measured vector against the database.
    Match {
        /// Ear image to run through the model.
        #[arg(long, conflicts_with = "vector", required_unless_present = "vector")]
        image: Option<PathBuf>,
        /// Seven comma-separated distances in centimetres.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        vector: Option<Vec<f64>>,
        /// Reference segment `AX,AY,BX,BY,LENGTH_CM` in image pixels.
        #[arg(long, value_delimiter = ',', requires = "image")]
        reference: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive conversion factors from annotated ears with known sizes.
    Calibrate {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        cm_table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-ear cm and px measurements.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// Render left and right ear images from head meshes.
    Render {
        #[arg(long)]
        mesh_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the six-fold augmented corpus.
    Augment {
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the model on one corpus split.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Per-sample metrics CSV.
        #[arg(long)]
        per_sample: Option<PathBuf>,
    },
    /// Serve the annotation tool on a local port.
    AnnotateServe {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn pick(arg: &Option<PathBuf>, configured: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    arg.clone().or_else(|| configured.clone()).ok_or_else(|| {
        Error::Config(format!(
            "{key} is not set (use --{key} or --set {key}=PATH)"
        ))
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let mut log = std::io::stderr();
    match cli.command {
        Command::Train {
            model_out,
            history_out,
            epochs,
            limit,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if limit.is_some() {
                cfg.limit = limit;
            }
            let out = cmd_train(&cfg, &model_out, &history_out, &mut log)?;
            let last = out.history.epochs.last();
            println!(
                "trained on {} samples; final loss {}; model {}",
                out.samples,
                last.map_or(f64::NAN, |r| r.loss),
                out.model_path.display()
            );
        }
        Command::Match {
            image,
            vector,
            reference,
            format,
            out,
        } => {
            let input = match (image, vector) {
                (Some(p), _) => MatchInput::Image(p),
                (None, Some(v)) => {
                    let v: [f64; DISTANCE_COUNT] = v.try_into().map_err(|_| {
                        Error::Config(format!("--vector needs {DISTANCE_COUNT} values"))
                    })?;
                    MatchInput::Vector(v)
                }
                (None, None) => return Err(Error::Config("give --image or --vector".into())),
            };
            let reference = reference
                .map(|r| -> Result<ReferenceDistance> {
                    if r.len() != 5 {
                        return Err(Error::Config(
                            "--reference needs AX,AY,BX,BY,LENGTH_CM".into(),
                        ));
                    }
                    let bad = |e: earmatch_core::Error| Error::Config(format!("--reference: {e}"));
                    Ok(ReferenceDistance {
                        point_a: Landmark::new(0, r[0], r[1]).map_err(bad)?,
                        point_b: Landmark::new(1, r[2], r[3]).map_err(bad)?,
                        physical_length_cm: r[4],
                    })
                })
                .transpose()?;
            let report = cmd_match(&cfg, &input, reference.as_ref())?;
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Text => report.to_text(),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Calibrate {
            annotations,
            cm_table,
            out,
            records_out,
        } => {
            let dir = pick(&annotations, &cfg.annotations, "annotations")?;
            let result = cmd_calibrate(&dir, &cm_table, &out, records_out.as_deref())?;
            for (id, why) in &result.skipped {
                let _ = writeln!(log, "skipped {id}: {why}");
            }
            println!(
                "{} ears; overall average {}; factors {}",
                result.records.len(),
                result.factors.overall_average(),
                out.display()
            );
        }
        Command::Render { mesh_dir, out } => {
            let dir = pick(&mesh_dir, &cfg.mesh_dir, "mesh_dir")?;
            let report = cmd_render(&cfg, &dir, &out)?;
            for issue in &report.failures {
                let _ = writeln!(log, "failed {}: {}", issue.path.display(), issue.detail);
            }
            println!(
                "{} images written to {}",
                report.images.len(),
                out.display()
            );
        }
        Command::Augment { out } => {
            let r = cmd_augment(&cfg, &out, &mut log)?;
            println!(
                "train {} -> {}, test {} -> {}",
                r.before.0, r.after.0, r.before.1, r.after.1
            );
        }
        Command::Evaluate { split, per_sample } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let e = cmd_evaluate(&cfg, split, per_sample.as_deref(), &mut log)?;
            println!(
                "mse {} mean_radial_error_px {} pck@{} {}",
                e.loss, e.mean_radial_error_px, cfg.pck_px, e.pck
            );
        }
        Command::AnnotateServe {
            images,
            annotations,
            assets,
            port,
            bind,
        } => {
            let dir = annotations
                .or(cfg.annotations.clone())
                .unwrap_or_else(|| images.join("annotations"));
            cmd_annotate_serve(
                &images,
                &dir,
                assets.as_deref(),
                SocketAddr::new(bind, port),
                &mut log,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
