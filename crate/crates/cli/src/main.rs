//! `lama`: simulate sparse-view scans and reconstruct them.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lama_core::config::RunConfig;
use lama_core::regularizer::Domain;
use lama_core::Error;

#[derive(Parser)]
#[command(
    name = "lama",
    version,
    about = "Sparse-view CT simulation and dual-domain reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `--dotted.key value` overrides, e.g. `--solver.max_iters 200`. Overrides go
/// after every other flag.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(
        value_name = "--KEY VALUE",
        trailing_var_arg = true,
        allow_hyphen_values = true,
        num_args = 0..
    )]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> lama_core::Result<commands::Session> {
        let overrides = parse_overrides(&self.overrides)?;
        let cfg = RunConfig::load(&self.config, &overrides)?;
        Ok(commands::Session {
            cfg,
            config_path: self.config.clone(),
            overrides,
        })
    }
}

/// `--a.b value` and `--a.b=value` pairs.
fn parse_overrides(raw: &[String]) -> lama_core::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(tok) = it.next() {
        let Some(key) = tok.strip_prefix("--") else {
            return Err(Error::config(format!("expected `--key value`, found `{tok}`")));
        };
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(format!("override `--{key}` has no value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured phantom.
    Phantom(ConfigArgs),
    /// Project the phantom, add noise, keep the selected views.
    Simulate {
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Starting point from a sparse sinogram.
    Init {
        #[arg(long)]
        sinogram: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Filtered back projection of the zero-filled sparse sinogram.
    Fbp {
        #[arg(long)]
        sinogram: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the solver from the initialization.
    Reconstruct {
        #[arg(long)]
        sinogram: Option<PathBuf>,
        #[arg(long)]
        init_image: Option<PathBuf>,
        #[arg(long)]
        init_sinogram: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// PSNR and SSIM of an image against a reference; with `--sinogram`, also the loss.
    Metrics {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Reconstructed full sinogram (its sidecar must carry the geometry).
        #[arg(long)]
        sinogram: Option<PathBuf>,
        #[arg(long, default_value_t = lama_core::metrics::DEFAULT_LOSS_WEIGHT)]
        mu: f64,
        #[arg(long)]
        data_range: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a regularizer weight file.
    Weights {
        #[arg(long, value_enum)]
        domain: DomainArg,
        #[arg(long, value_enum, default_value_t = WeightKind::Tv)]
        kind: WeightKind,
        #[arg(long, default_value_t = 0.02)]
        strength: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// The whole pipeline: phantom, simulate, init, fbp, reconstruct, metrics.
    Run(ConfigArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DomainArg {
    Image,
    Sinogram,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Image => Domain::Image,
            DomainArg::Sinogram => Domain::Sinogram,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WeightKind {
    Tv,
    Random,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::UnsupportedGeometry(_) | Error::Serde(_) => 2,
        Error::Io(_) | Error::Format { .. } | Error::Input(_) => 3,
        Error::Numerical(_) | Error::Solver { .. } => 4,
    }
}

fn dispatch(cmd: Command) -> lama_core::Result<()> {
    use commands as c;
    match cmd {
        Command::Phantom(cfg) => c::phantom(&cfg.load()?),
        Command::Simulate { phantom, cfg } => c::simulate(&cfg.load()?, phantom),
        Command::Init { sinogram, cfg } => c::init(&cfg.load()?, sinogram),
        Command::Fbp { sinogram, cfg } => c::fbp(&cfg.load()?, sinogram),
        Command::Reconstruct {
            sinogram,
            init_image,
            init_sinogram,
            cfg,
        } => c::reconstruct(&cfg.load()?, sinogram, init_image, init_sinogram),
        Command::Metrics {
            test,
            reference,
            sinogram,
            mu,
            data_range,
            output,
        } => c::metrics(
            &test,
            &reference,
            sinogram.as_deref(),
            mu,
            data_range,
            output.as_deref(),
        ),
        Command::Weights {
            domain,
            kind,
            strength,
            seed,
            layers,
            channels,
            output,
        } => c::weights(domain.into(), kind, strength, seed, layers, channels, &output),
        Command::Run(cfg) => c::run_all(&cfg.load()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
