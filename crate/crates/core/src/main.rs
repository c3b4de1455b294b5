use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nova_core::commands::{
    cmd_compose, cmd_eval, cmd_gen, cmd_render, cmd_train, CameraSpec, InsertionSpec,
};
use nova_core::data::SceneConfig;
use nova_core::model::SceneModel;
use nova_core::verify::{run_checks, VerifyHooks};
use nova_core::{NovaError, Result};

#[derive(Parser)]
#[command(name = "nova", version, about = "Compositional multi-field volume renderer")]
struct Cli {
    /// Worker threads for ray-parallel work (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scene config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct View {
    /// Camera spec file (TOML with `frame` or `eye`/`target`/`up`).
    #[arg(long, conflicts_with = "frame")]
    camera: Option<PathBuf>,
    /// Use training camera `i` of the configured scene.
    #[arg(long)]
    frame: Option<usize>,
    /// Scene time in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    time: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render color, per-field masks and depth from a checkpoint.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        view: View,
        /// Hide the static field (its blending factor set to 0).
        #[arg(long)]
        dynamic_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the static scene with inserted copies of trained objects.
    Compose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Insertion spec file (`[[insert]]` tables).
        #[arg(long)]
        insert: PathBuf,
        #[command(flatten)]
        view: View,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the dataset's held-out frames.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the invariant and oracle checks.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<(SceneConfig, String)> {
    match &common.config {
        Some(path) => SceneConfig::load(path, &common.set),
        None => Ok((SceneConfig::from_toml_with_overrides("", &common.set)?, String::new())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| NovaError::io(path, e))
}

fn resolve_camera(view: &View, config: &SceneConfig) -> Result<nova_core::geometry::Camera> {
    let spec = match (&view.camera, view.frame) {
        (Some(path), _) => CameraSpec::from_toml(&read_text(path)?)?,
        (None, Some(i)) => CameraSpec {
            frame: Some(i),
            ..CameraSpec::default()
        },
        (None, None) => return Err(NovaError::InvalidInput("give --camera or --frame".into())),
    };
    spec.resolve(config)
}

fn load_model(path: &Path, config: &SceneConfig) -> Result<SceneModel> {
    Ok(SceneModel::load_for(path, config, config.objects.len())?.0)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| NovaError::InvalidInput(format!("--workers: {e}")))?;
    }
    match cli.command {
        Command::Gen { common, out } => {
            let (config, _) = load_config(&common)?;
            cmd_gen(&config, &out)?;
        }
        Command::Train { common, data, out } => {
            let (config, text) = load_config(&common)?;
            let manifest = cmd_train(&config, &text, &common.set, &data, &out)?;
            if let Some(m) = &manifest.final_metrics {
                println!("held-out PSNR {:.3} dB, mask IoU {:.4}", m.mean_psnr, m.mean_mask_iou);
            }
        }
        Command::Render {
            common,
            checkpoint,
            view,
            dynamic_only,
            out,
        } => {
            let (config, _) = load_config(&common)?;
            let model = load_model(&checkpoint, &config)?;
            let camera = resolve_camera(&view, &config)?;
            cmd_render(&model, &config, &camera, view.time, dynamic_only, &out)?;
        }
        Command::Compose {
            common,
            checkpoint,
            insert,
            view,
            out,
        } => {
            let (config, _) = load_config(&common)?;
            let model = load_model(&checkpoint, &config)?;
            let spec = InsertionSpec::from_toml(&read_text(&insert)?)?;
            let camera = resolve_camera(&view, &config)?;
            cmd_compose(&model, &config, &spec, &camera, view.time, Some(&out))?;
        }
        Command::Eval {
            common,
            checkpoint,
            data,
            report,
        } => {
            let (config, _) = load_config(&common)?;
            let model = load_model(&checkpoint, &config)?;
            let r = cmd_eval(&model, &config, &data, &report)?;
            println!("mean PSNR {:.3} dB, mask IoU {:.4}", r.mean_psnr, r.mean_mask_iou);
        }
        Command::Verify { common } => {
            let (config, _) = load_config(&common)?;
            let report = run_checks(&config, &VerifyHooks::default());
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            report.into_result()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
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
