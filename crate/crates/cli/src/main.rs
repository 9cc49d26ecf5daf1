//! Command line front end: dataset generation, statistics, validation, and
//! single-image utilities.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crumple_core::dataset::{
    compute_stats, generate, preview_damage, render_one, validate_manifest, DatasetError,
    GenerationConfig, ModelSource, HISTOGRAM_BINS, HISTOGRAM_MAX,
};
use crumple_core::DamageType;

#[derive(Parser)]
#[command(
    name = "crumple",
    version,
    about = "Synthesizes damaged-car imagery with pixel-exact part and damage masks"
)]
struct Cli {
    /// Worker threads for rendering; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a TOML configuration.
    Generate {
        /// Configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if absent.
        #[arg(long)]
        output: PathBuf,
        /// Override the configured image count.
        #[arg(long)]
        count: Option<u32>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print aggregate statistics of a generated dataset as JSON.
    Stats {
        /// Dataset directory containing manifest.json.
        dataset: Option<PathBuf>,
        /// Manifest path, as an alternative to the directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write one histogram JSON file per damage type here.
        #[arg(long, value_name = "DIR")]
        emit_histograms: Option<PathBuf>,
    },
    /// Check a generated dataset against its manifest.
    Validate {
        /// Dataset directory containing manifest.json.
        dataset: Option<PathBuf>,
        /// Manifest path, as an alternative to the directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Render a single image, either from a dataset configuration or from a
    /// bare model with a forced damage type.
    RenderOne {
        #[arg(long, conflicts_with_all = ["model", "labels", "damage"])]
        config: Option<PathBuf>,
        /// Image index within the configured count.
        #[arg(long, default_value_t = 0)]
        index: u32,
        /// Wavefront OBJ geometry (stand-alone mode).
        #[arg(long, requires = "labels")]
        model: Option<PathBuf>,
        /// Part-label sidecar for --model.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Force the primary damage type.
        #[arg(long, value_name = "TYPE")]
        damage: Option<DamageType>,
        /// Base seed (stand-alone mode).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, alias = "out")]
        output: PathBuf,
    },
    /// Render one damage type in isolation on a sphere.
    PreviewDamage {
        /// One of: dent, scratch, crack, glass-shatter, broken-lamp.
        #[arg(long = "type", value_name = "TYPE")]
        dtype: DamageType,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square image edge in pixels.
        #[arg(long, default_value_t = 512)]
        size: u32,
        #[arg(long, alias = "out")]
        output: PathBuf,
    },
}

/// Prints a report as pretty JSON, staying quiet when the reader closes the
/// pipe early (as `crumple stats ... | head` does).
fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
        Err(e) => eprintln!("warning: cannot write to stdout: {e}"),
    }
}

/// Resolves `stats`/`validate` target arguments to the dataset directory.
fn dataset_dir(dataset: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<PathBuf, DatasetError> {
    match (dataset, manifest) {
        (Some(dir), None) => Ok(dir),
        (None, Some(manifest)) => {
            if manifest.is_dir() {
                Ok(manifest)
            } else {
                Ok(manifest
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")))
            }
        }
        (Some(_), Some(_)) => Err(DatasetError::Config(
            "pass either a dataset directory or --manifest, not both".to_string(),
        )),
        (None, None) => Err(DatasetError::Config(
            "pass a dataset directory or --manifest".to_string(),
        )),
    }
}

fn write_histograms(stats_dir: &Path, stats: &crumple_core::DatasetStats) -> Result<(), DatasetError> {
    std::fs::create_dir_all(stats_dir).map_err(|source| DatasetError::Io {
        path: stats_dir.to_path_buf(),
        source,
    })?;
    for (name, per_type) in &stats.per_type {
        let path = stats_dir.join(format!("{name}.json"));
        let body = serde_json::json!({
            "damage_type": name,
            "bins": HISTOGRAM_BINS,
            "upper_bound": HISTOGRAM_MAX,
            "bin_width": HISTOGRAM_MAX / HISTOGRAM_BINS as f64,
            "counts": per_type.pixel_fraction_histogram,
        });
        std::fs::write(&path, serde_json::to_string_pretty(&body).expect("histograms serialize"))
            .map_err(|source| DatasetError::Io { path, source })?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), DatasetError> {
    match command {
        Command::Generate {
            config,
            output,
            count,
            seed,
        } => {
            let mut config = GenerationConfig::load(&config)?;
            if let Some(count) = count {
                config.count = count;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let report = generate(&config, &output)?;
            let ok = report.manifest.records.len() - report.failed;
            eprintln!(
                "generated {ok} of {} images into {}",
                config.count,
                output.display()
            );
            if report.failed > 0 {
                return Err(DatasetError::Partial {
                    failed: report.failed,
                    total: config.count as usize,
                });
            }
            Ok(())
        }
        Command::Stats {
            dataset,
            manifest,
            emit_histograms,
        } => {
            let dir = dataset_dir(dataset, manifest)?;
            let stats = compute_stats(&dir)?;
            if let Some(hist_dir) = emit_histograms {
                write_histograms(&hist_dir, &stats)?;
            }
            print_json(&stats);
            Ok(())
        }
        Command::Validate { dataset, manifest } => {
            let dir = dataset_dir(dataset, manifest)?;
            let report = validate_manifest(&dir)?;
            print_json(&report);
            if report.is_valid() {
                Ok(())
            } else {
                Err(DatasetError::Invalid(report.problems.len()))
            }
        }
        Command::RenderOne {
            config,
            index,
            model,
            labels,
            damage,
            seed,
            output,
        } => {
            let (config, index) = match (config, model) {
                (Some(path), None) => (GenerationConfig::load(&path)?, index),
                (None, Some(geometry)) => {
                    let mut config = GenerationConfig::default();
                    let id = geometry
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "model".to_string());
                    config.models = vec![ModelSource {
                        id,
                        geometry,
                        labels: labels.expect("clap enforces --labels with --model"),
                    }];
                    config.count = index + 1;
                    config.seed = seed.unwrap_or(0);
                    (config, index)
                }
                (None, None) => {
                    return Err(DatasetError::Config(
                        "pass --config or --model/--labels".to_string(),
                    ))
                }
                (Some(_), Some(_)) => unreachable!("clap rejects --config with --model"),
            };
            let record = render_one(&config, index, &output, damage)?;
            print_json(&record);
            Ok(())
        }
        Command::PreviewDamage {
            dtype,
            seed,
            size,
            output,
        } => {
            let path = preview_damage(dtype, seed, size, &output)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run_command = || match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    };
    match cli.jobs {
        None => run_command(),
        Some(jobs) => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(run_command),
            Err(e) => {
                eprintln!("error: cannot build a {jobs}-thread pool: {e}");
                ExitCode::from(1)
            }
        },
    }
}
