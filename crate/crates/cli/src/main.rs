use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use splat4d::camsel::{select_cameras, SelectionParams, VisibilityData};
use splat4d::gauss4d::slice_at;
use splat4d::harness::{
    evaluate, gradient_suite, heatmap, suite_table, synth, synthetic_visibility, Ablation, Dataset, EvalOptions,
    SynthSpec, VisibilitySpec,
};
use splat4d::optimloop::{frame_time, train, AlignOptions, GradientL1, Model, TrainConfig};
use splat4d::splat::{render, Image, RenderOptions, ViewKind};

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "SPLAT4D_WORKERS";

#[derive(Parser)]
#[command(name = "splat4d", version, about = "Sparse-camera 4D Gaussian splatting with a distortion field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Eval,
    Input,
    Generated,
}

impl From<Split> for ViewKind {
    fn from(s: Split) -> Self {
        match s {
            Split::Eval => ViewKind::Eval,
            Split::Input => ViewKind::Input,
            Split::Generated => ViewKind::Generated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    NoField,
    NoSmooth,
    NoPoseOpt,
}

impl From<VariantArg> for Ablation {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Ablation::Full,
            VariantArg::NoField => Ablation::NoField,
            VariantArg::NoSmooth => Ablation::NoSmooth,
            VariantArg::NoPoseOpt => Ablation::NoPoseOpt,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON scene spec; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Target mean displacement of generated views, in pixels.
        #[arg(long)]
        distortion_px: Option<f64>,
    },
    /// Greedy camera-subset selection over a visibility document.
    SelectCams {
        /// Visibility JSON; without it a synthetic camera grid is used.
        #[arg(long)]
        visibility: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        o_min: f64,
        #[arg(long, default_value_t = 0.95)]
        tau: f64,
        #[arg(long, default_value_t = 0.05)]
        mu: f64,
        /// Write the selection JSON here (also written to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the synthetic visibility document used.
        #[arg(long)]
        save_visibility: Option<PathBuf>,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training config JSON; defaults to the standard constants scaled
        /// to the dataset's iteration budget.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        variant: VariantArg,
        /// Override the iteration budget (rescales the schedule).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one view of a dataset from a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        view: String,
        /// `.ppm` or `.pfm`.
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR/SSIM report over a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        split: Split,
        /// Test-pose alignment iterations for evaluation views.
        #[arg(long, default_value_t = 500)]
        align_iters: usize,
        /// Directory for `report.json` and `report.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Distortion-magnitude heatmap seen from one view.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn write_image(img: &Image, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => img.write_pfm(path)?,
        Some("ppm") => img.write_ppm(path)?,
        _ => bail!("output {} must end in .ppm or .pfm", path.display()),
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn find_view<'a>(ds: &'a Dataset, id: &str) -> Result<&'a splat4d::optimloop::TrainView> {
    ds.find(id).with_context(|| format!("dataset has no view `{id}`"))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            out,
            spec,
            seed,
            distortion_px,
        } => {
            let mut spec: SynthSpec = match spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(px) = distortion_px {
                spec.distortion.mean_px = px;
            }
            let ds = synth(&spec)?;
            let manifest = ds.write(&out)?;
            println!("wrote {} files to {}", manifest.files.len(), out.display());
        }
        Command::SelectCams {
            visibility,
            o_min,
            tau,
            mu,
            out,
            save_visibility,
        } => {
            let vis = match visibility {
                Some(p) => VisibilityData::load(&p)?,
                None => synthetic_visibility(&VisibilitySpec::default())?,
            };
            if let Some(p) = save_visibility {
                write_json(&p, &vis)?;
            }
            let sel = select_cameras(&vis, &SelectionParams { o_min, tau, mu })?;
            print!("{}", sel.table());
            let json = serde_json::to_string_pretty(&sel)?;
            println!("{json}");
            if let Some(p) = out {
                write_json(&p, &sel)?;
            }
        }
        Command::Train {
            data,
            out,
            config,
            variant,
            iters,
            seed,
        } => {
            let ds = Dataset::load(&data)?;
            let mut cfg = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => ds.spec.train_config(),
            };
            if let Some(n) = iters {
                cfg = cfg.scaled_to(n);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.variant = Ablation::from(variant).variant();
            std::fs::create_dir_all(&out)?;
            cfg.save(&out.join("config.json"))?;
            let views = ds.training_views();
            let result = train(&ds.init, ds.bounds, &views, &cfg, &GradientL1)?;
            result.model.save(&out.join("checkpoint.json"))?;
            std::fs::write(out.join("loss_log.tsv"), &result.log)?;
            println!("trained {} iterations; outputs in {}", cfg.schedule.total_iters, out.display());
        }
        Command::Render {
            checkpoint,
            data,
            view,
            out,
        } => {
            let model = Model::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let v = model.posed_view(&find_view(&ds, &view)?.view);
            let slices = model
                .canonical()
                .iter()
                .map(|g| slice_at(g, frame_time(v.t_index)))
                .collect::<splat4d::Result<Vec<_>>>()?;
            let img = render(&v, &slices, None, &RenderOptions { cutoff_sigma: Some(3.0) })?.color;
            write_image(&img, &out)?;
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            align_iters,
            out,
        } => {
            let model = Model::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let opts = EvalOptions {
                align: Some(AlignOptions {
                    iters: align_iters,
                    ..AlignOptions::default()
                }),
                ..EvalOptions::default()
            };
            let report = evaluate(&model, &ds, split.into(), &opts)?;
            report.write(&out.join("report.json"), &out.join("report.txt"))?;
            print!("{}", report.table());
        }
        Command::Heatmap {
            checkpoint,
            data,
            view,
            t,
            s,
            out,
        } => {
            let model = Model::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let img = heatmap(&model, &find_view(&ds, &view)?.view, t, s)?;
            write_image(&img, &out)?;
        }
        Command::Gradcheck { seeds } => {
            let rows = gradient_suite(seeds)?;
            print!("{}", suite_table(&rows));
            if rows.iter().any(|r| !r.passes()) {
                bail!("gradient check failed");
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_workers()?;
    run(Cli::parse().command)
}
