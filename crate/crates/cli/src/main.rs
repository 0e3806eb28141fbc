//! `topo-pain`: synthesize data, extract descriptors, learn projection
//! bases, train and apply the pain model, filter estimate sequences and run
//! the leave-one-person-out evaluation.

mod estimates;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use topo_pain_core::config::{PipelineConfig, CONFIG_SCHEMA_VERSION};
use topo_pain_core::data::{load_manifest, save_dataset, synth_dataset};
use topo_pain_core::embed::{ProjectionBasis, ReductionMethod};
use topo_pain_core::eval::{run_lopo, EvalOptions};
use topo_pain_core::features::{
    descriptor_matrix, extract_features, load_features_csv, merge_pts_csv, save_features_csv,
    save_pts_csv, DescriptorFamily,
};
use topo_pain_core::learn::{predict_pain_features, train_pain_model, PainModel};
use topo_pain_core::temporal::{
    filter_median_lr, train_temporal_filter, FilterConfig, FilterMethod, FilterRegressor,
};

#[derive(Parser)]
#[command(
    name = "topo-pain",
    version = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)"),
    about = "Continuous pain-intensity estimation from facial image sequences"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Pipeline configuration file (JSON). Explicit flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for everything random.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic face dataset (images plus manifest).
    Synth {
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract descriptors from a manifest into CSV.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Landmark-coordinate companion CSV (needed later by `train`).
        #[arg(long)]
        pts_out: Option<PathBuf>,
        /// Derivative scale in pixels; overrides the config file.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Learn a projection basis on unlabeled source descriptors.
    LearnBasis {
        /// Source descriptor CSV (written by `extract`).
        #[arg(long)]
        source: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: ReductionMethod,
        /// Which descriptor half to reduce.
        #[arg(long, value_parser = ["hess", "grad"])]
        family: String,
        /// Output dimensionality (defaults: 32 for hess, 24 for grad).
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the two-level pain model on labeled descriptors.
    Train {
        /// Labeled descriptor CSV of the training subjects.
        #[arg(long)]
        features: PathBuf,
        /// Landmark-coordinate companion CSV from `extract --pts-out`.
        #[arg(long)]
        pts: PathBuf,
        #[arg(long)]
        basis_hess: PathBuf,
        #[arg(long)]
        basis_grad: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every frame of a manifest with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Temporally filter an estimate file.
    Filter {
        /// median-lr, vicinity-mlp, strict-svr or strict-mlp.
        #[arg(long)]
        method: String,
        /// Window width (odd). Defaults: 21, or 61 for strict ordering.
        #[arg(long)]
        w: Option<usize>,
        /// Estimates to filter (CSV from `predict`).
        #[arg(long = "in", value_name = "EST")]
        input: PathBuf,
        /// Training estimates with a truth column (learned methods only).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Filtered estimates (same CSV layout).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full leave-one-person-out evaluation.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Unlabeled source descriptor CSV for basis learning.
        #[arg(long)]
        source_features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<ReductionMethod, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn effective_config(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = global.threads {
        cfg.threads = Some(threads);
    }
    cfg.schema_version = CONFIG_SCHEMA_VERSION;
    Ok(cfg)
}

fn init_threads(cfg: &PipelineConfig) {
    if let Some(n) = cfg.threads {
        // ignore failure: the global pool can only be set once (fine in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Sidecar log next to an output file: timing and the effective config live
/// here so the outputs themselves stay byte-reproducible.
fn write_sidecar(out: &Path, cfg: &PipelineConfig, elapsed: std::time::Duration) -> Result<()> {
    let log_path = out.with_extension(format!(
        "{}log",
        out.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let body = format!(
        "finished_unix_ms: {}\nelapsed_ms: {}\nconfig: {}\n",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        elapsed.as_millis(),
        serde_json::to_string(cfg)?
    );
    std::fs::write(&log_path, body)
        .with_context(|| format!("writing sidecar log {}", log_path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli.global)?;
    cfg.validate().context("config validation")?;
    init_threads(&cfg);
    let started = std::time::Instant::now();

    match cli.command {
        Command::Synth {
            subjects,
            frames,
            out,
        } => {
            let data = synth_dataset(cfg.seed, subjects, frames)?;
            let manifest = save_dataset(&out, &data)?;
            write_sidecar(&manifest, &cfg, started.elapsed())?;
            println!(
                "wrote {} sequences ({} frames) to {}",
                data.len(),
                data.iter().map(|s| s.len()).sum::<usize>(),
                manifest.display()
            );
        }
        Command::Extract {
            manifest,
            out,
            pts_out,
            sigma,
        } => {
            let mut cfg = cfg;
            if let Some(s) = sigma {
                cfg.scale.sigma = s;
                cfg.validate().context("config validation")?;
            }
            let sequences = load_manifest(&manifest)?;
            let features =
                extract_features(&sequences, &cfg.normalize, &cfg.roi, &cfg.scale, &cfg.hot)?;
            save_features_csv(&out, &features)?;
            if let Some(p) = &pts_out {
                save_pts_csv(p, &features)?;
            }
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!("wrote {} feature rows to {}", features.len(), out.display());
        }
        Command::LearnBasis {
            source,
            method,
            family,
            dims,
            out,
        } => {
            let rows = load_features_csv(&source)?;
            if rows.is_empty() {
                bail!("source feature file {} is empty", source.display());
            }
            let n = rows.len();
            let flags: Vec<bool> = rows
                .iter()
                .map(|f| f.pain.map_or(false, |p| p > 0.0))
                .collect();
            let (data, t) = match family.as_str() {
                "hess" => (
                    descriptor_matrix(&rows, DescriptorFamily::Hess),
                    dims.unwrap_or(cfg.t_hess),
                ),
                _ => (
                    descriptor_matrix(&rows, DescriptorFamily::Grad),
                    dims.unwrap_or(cfg.t_grad),
                ),
            };
            let basis = topo_pain_core::embed::learn_basis(
                &data,
                &flags,
                method,
                t,
                &cfg.embed,
                topo_pain_core::embed::BasisProvenance {
                    source_id: source.display().to_string(),
                    seed: cfg.seed,
                },
            )?;
            basis.save(&out)?;
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!(
                "learned {}-dim {} basis for {} from {} rows",
                basis.t, basis.method, family, n
            );
        }
        Command::Train {
            features,
            pts,
            basis_hess,
            basis_grad,
            out,
        } => {
            let mut rows = load_features_csv(&features)?;
            merge_pts_csv(&pts, &mut rows)?;
            let bh = ProjectionBasis::load(&basis_hess)?;
            let bg = ProjectionBasis::load(&basis_grad)?;
            let model =
                train_pain_model(&rows, bh, bg, &cfg.svr, cfg.embed.unit_norm, cfg.seed)?;
            model.save(&out)?;
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!("trained pain model on {} frames -> {}", rows.len(), out.display());
        }
        Command::Predict {
            model,
            manifest,
            out,
        } => {
            let model = PainModel::load(&model)?;
            let sequences = load_manifest(&manifest)?;
            let features =
                extract_features(&sequences, &cfg.normalize, &cfg.roi, &cfg.scale, &cfg.hot)?;
            let rows: Vec<estimates::EstimateRow> = features
                .iter()
                .map(|f| -> Result<estimates::EstimateRow> {
                    let p = predict_pain_features(&model, f)?;
                    Ok(estimates::EstimateRow {
                        subject: f.subject.clone(),
                        sequence: f.sequence.clone(),
                        frame: f.frame,
                        estimate: p.raw,
                        clamped: p.clamped,
                        truth: f.pain,
                    })
                })
                .collect::<Result<_>>()?;
            estimates::save(&out, &rows)?;
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!("scored {} frames -> {}", rows.len(), out.display());
        }
        Command::Filter {
            method,
            w,
            input,
            train,
            out,
        } => {
            let rows = estimates::load(&input)?;
            let filtered = apply_filter(&cfg, &method, w, &rows, train.as_deref())?;
            estimates::save(&out, &filtered)?;
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!("filtered {} frames -> {}", filtered.len(), out.display());
        }
        Command::Evaluate {
            manifest,
            source_features,
            out,
        } => {
            let target = load_manifest(&manifest)?;
            let source = load_features_csv(&source_features)?;
            let flags: Vec<bool> = source
                .iter()
                .map(|f| f.pain.map_or(false, |p| p > 0.0))
                .collect();
            let report = run_lopo(
                &target,
                &source,
                &flags,
                &cfg,
                &EvalOptions {
                    source_id: source_features.display().to_string(),
                },
            )?;
            report.save(&out)?;
            write_sidecar(&out, &cfg, started.elapsed())?;
            println!(
                "lopo over {} folds: pooled mse {:.4}, pearson {}, auc {}",
                report.folds.len(),
                report.pooled_mse,
                report
                    .pooled_pearson
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "undefined".into()),
                report
                    .pooled_auc
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "undefined".into()),
            );
        }
    }
    Ok(())
}

fn apply_filter(
    cfg: &PipelineConfig,
    method: &str,
    w: Option<usize>,
    rows: &[estimates::EstimateRow],
    train: Option<&Path>,
) -> Result<Vec<estimates::EstimateRow>> {
    let (fmethod, regressor, default_w) = match method {
        "median-lr" => (FilterMethod::MedianLr, FilterRegressor::Mlp, 21),
        "vicinity-mlp" => (FilterMethod::VicinityMlp, FilterRegressor::Mlp, 21),
        "strict-svr" => (FilterMethod::StrictOrdering, FilterRegressor::Svr, 61),
        "strict-mlp" => (FilterMethod::StrictOrdering, FilterRegressor::Mlp, 61),
        other => bail!("unknown filter method '{other}' (expected median-lr, vicinity-mlp, strict-svr or strict-mlp)"),
    };
    let fcfg = FilterConfig {
        method: fmethod,
        w: w.unwrap_or(default_w),
        regressor,
        ordering_stat: cfg
            .filter
            .map(|f| f.ordering_stat)
            .unwrap_or(topo_pain_core::temporal::OrderingStat::Variance),
        seed: cfg.seed,
    };
    fcfg.validate()?;

    let sequences = estimates::group_by_sequence(rows);
    let filtered_per_seq: Vec<Vec<f64>> = if fmethod == FilterMethod::MedianLr {
        sequences
            .iter()
            .map(|(_, seq)| {
                let z: Vec<f64> = seq.iter().map(|r| r.estimate).collect();
                Ok(filter_median_lr(&z, fcfg.w)?)
            })
            .collect::<Result<_>>()?
    } else {
        let train_path = train.ok_or_else(|| {
            anyhow::anyhow!("filter method '{method}' is learned and needs --train estimates with a truth column")
        })?;
        let train_rows = estimates::load(train_path)?;
        let train_seqs = estimates::group_by_sequence(&train_rows);
        let mut traces = Vec::new();
        for (key, seq) in &train_seqs {
            let z: Vec<f64> = seq.iter().map(|r| r.estimate).collect();
            let t: Result<Vec<f64>> = seq
                .iter()
                .map(|r| {
                    r.truth.ok_or_else(|| {
                        anyhow::anyhow!("training estimate {}/{}/{} lacks a truth value", key.0, key.1, r.frame)
                    })
                })
                .collect();
            traces.push((z, t?));
        }
        let filter = train_temporal_filter(&traces, &fcfg)?;
        sequences
            .iter()
            .map(|(_, seq)| {
                let z: Vec<f64> = seq.iter().map(|r| r.estimate).collect();
                Ok(filter.apply(&z)?)
            })
            .collect::<Result<_>>()?
    };

    let mut out = Vec::with_capacity(rows.len());
    for ((_, seq), filtered) in sequences.iter().zip(filtered_per_seq) {
        for (row, est) in seq.iter().zip(filtered) {
            out.push(estimates::EstimateRow {
                estimate: est,
                clamped: est.clamp(0.0, 15.0),
                ..(*row).clone()
            });
        }
    }
    Ok(out)
}
