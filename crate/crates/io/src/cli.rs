//! The `cbc` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use cbc_core::certification::certify_dataset;
use cbc_core::evaluation::{evaluate_accuracy, prior_divergence, robustness_curve, AttackConfig};
use cbc_core::training::{fit_with, init_model};
use cbc_core::Dataset;
use clap::{Parser, Subcommand};

use crate::config::{load_config, ConfigFile};
use crate::error::{IoError, Result};
use crate::model_file::{load_model, save_model, TrainingMeta};
use crate::report::{at, Report};
use crate::{blobs, data, pgm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cbc", version, about = "Train, evaluate, certify and attack CBC models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from a JSON config on the training split of a data directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Suppresses per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Clean test accuracy.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Uses only the first N test samples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Certified robust accuracy at each radius.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Empirical robust accuracy under an L2 PGD attack.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long, default_value_t = AttackConfig::DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = AttackConfig::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Writes every component as a binary PGM image.
    ExportComponents {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        side: usize,
    },
    /// Jensen-Shannon divergence between the priors of two classes.
    Divergence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
        classes: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Writes a Gaussian-blob data directory (train.json, test.json).
    MakeBlobs {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 0.05)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Results go to stdout, diagnostics to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match run(cli.command, err) {
        Ok(Outcome::Report(report, path)) => {
            if let Err(e) = report.write_lines(out) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_DATA;
            }
            if let Some(path) = path {
                if let Err(e) = report.save(path) {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_DATA;
                }
            }
            EXIT_OK
        }
        Ok(Outcome::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

enum Outcome {
    Report(Report, Option<PathBuf>),
    Usage(String),
}

fn limited(data: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) => data.head(n),
        None => data,
    }
}

fn run(command: Command, err: &mut dyn Write) -> Result<Outcome> {
    match command {
        Command::Train {
            config,
            data_dir,
            out,
            seed,
            report: report_path,
            quiet,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let train = data::load_split(&data_dir, true)?;
            let model = init_model(&train, &cfg)?;
            let (model, history) = fit_with(model, &train, &cfg, |r| {
                if !quiet {
                    let _ = writeln!(
                        err,
                        "epoch {} loss {:.6} accuracy {:.4} sigma_min {:.4}",
                        r.epoch + 1,
                        r.loss,
                        r.accuracy,
                        r.sigma_min
                    );
                }
            })?;
            let echo = ConfigFile::from(cfg.clone());
            save_model(&out, &model, Some(TrainingMeta::new(echo.clone(), &history)))?;
            let mut report = Report::new("train");
            report.config = Some(echo);
            let last = history.epochs.last().expect("at least one epoch");
            report.push("epochs", history.epochs.len());
            report.push("final_loss", last.loss);
            report.push("train_accuracy", last.accuracy);
            report.push("min_component_distance", history.min_component_distance);
            report.push("model", out.display().to_string());
            Ok(Outcome::Report(report, report_path))
        }
        Command::Eval {
            model,
            data_dir,
            limit,
            report: report_path,
        } => {
            let (model, _) = load_model(&model)?;
            let test = limited(data::load_split(&data_dir, false)?, limit);
            let mut report = Report::new("eval");
            report.push("samples", test.len());
            report.push("accuracy", evaluate_accuracy(&model, &test)?);
            Ok(Outcome::Report(report, report_path))
        }
        Command::Certify {
            model,
            data_dir,
            epsilon,
            limit,
            report: report_path,
        } => {
            let (model, _) = load_model(&model)?;
            let test = limited(data::load_split(&data_dir, false)?, limit);
            let cert = certify_dataset(&model, &test, &epsilon)?;
            let mut report = Report::new("certify");
            report.push("samples", test.len());
            report.push("distance", cert.distance.name());
            if let Some(k) = cert.kappa {
                report.push("kappa", k);
            }
            report.push("sigma_min", cert.sigma_min);
            report.push("clean_accuracy", cert.clean_accuracy());
            for (e, acc) in &cert.certified {
                report.push(at("certified_accuracy", *e), *acc);
            }
            Ok(Outcome::Report(report, report_path))
        }
        Command::Attack {
            model,
            data_dir,
            mut epsilon,
            steps,
            restarts,
            seed,
            limit,
            report: report_path,
        } => {
            let (model, _) = load_model(&model)?;
            let test = limited(data::load_split(&data_dir, false)?, limit);
            epsilon.sort_by(f64::total_cmp);
            let cfg = AttackConfig::with_steps(epsilon.first().copied().unwrap_or(0.0), steps, restarts).seeded(seed);
            if let Err(e) = cfg.validate() {
                return Ok(Outcome::Usage(e.to_string()));
            }
            let curve = robustness_curve(&model, &test, &epsilon, &cfg)?;
            let mut report = Report::new("attack");
            report.push("samples", test.len());
            report.push("steps", steps);
            report.push("restarts", restarts);
            if let Some(p) = curve.points.first() {
                report.push("clean_accuracy", p.clean);
            }
            for p in &curve.points {
                report.push(at("empirical_robust_accuracy", p.epsilon), p.empirical);
                if let Some(c) = p.certified {
                    report.push(at("certified_accuracy", p.epsilon), c);
                    report.push(at("violations", p.epsilon), p.violations);
                }
            }
            Ok(Outcome::Report(report, report_path))
        }
        Command::ExportComponents { model, out_dir, side } => {
            let (model, _) = load_model(&model)?;
            let written = pgm::export_components(&model, &out_dir, side)?;
            let mut report = Report::new("export-components");
            report.push("images", written.len());
            report.push("out_dir", out_dir.display().to_string());
            Ok(Outcome::Report(report, None))
        }
        Command::Divergence {
            model,
            classes,
            report: report_path,
        } => {
            let [a, b] = classes[..] else {
                return Ok(Outcome::Usage(format!(
                    "--classes takes exactly two class indices, got {}",
                    classes.len()
                )));
            };
            let (model, _) = load_model(&model)?;
            let head = model.head.reasoning().ok_or_else(|| {
                IoError::from(cbc_core::Error::Precondition(format!(
                    "{} heads have no class priors",
                    model.head_kind().name()
                )))
            })?;
            let mut report = Report::new("divergence");
            report.push("class_a", a);
            report.push("class_b", b);
            report.push("jsd", prior_divergence(head, a, b)?);
            Ok(Outcome::Report(report, report_path))
        }
        Command::MakeBlobs {
            out_dir,
            classes,
            per_class,
            spread,
            seed,
        } => {
            std::fs::create_dir_all(&out_dir).map_err(|e| IoError::file(&out_dir, e))?;
            let train = blobs::make_blobs(classes, per_class, spread, seed)?;
            let test = blobs::make_blobs(classes, per_class, spread, seed.wrapping_add(1))?;
            data::save_dataset(out_dir.join("train.json"), &train)?;
            data::save_dataset(out_dir.join("test.json"), &test)?;
            let mut report = Report::new("make-blobs");
            report.push("train_samples", train.len());
            report.push("test_samples", test.len());
            report.push("out_dir", out_dir.display().to_string());
            Ok(Outcome::Report(report, None))
        }
    }
}
