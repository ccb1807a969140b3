//! One function per subcommand. Outputs land in the configured output directory under fixed names.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lama_core::config::RunConfig;
use lama_core::io::{read_image, read_sinogram, write_image, write_pgm, write_sinogram};
use lama_core::metrics::{evaluate_loss, report, MetricReport};
use lama_core::regularizer::{make_random_weights, make_tv_weights, save_weights, ArchSpec, Domain};
use lama_core::simdata::{initialize, make_phantom, simulate_measurement};
use lama_core::solver::run;
use lama_core::tomo::{fbp_reconstruct, FilterWindow};
use lama_core::{DualState, Error, Image, IterateLog, ProblemSpec, Projector, Result, Sinogram};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::WeightKind;

pub const PHANTOM: &str = "phantom.f64";
pub const SINO_FULL: &str = "sinogram_full.f64";
pub const SINO: &str = "sinogram.f64";
pub const INIT_IMAGE: &str = "init_image.f64";
pub const INIT_SINO: &str = "init_sinogram.f64";
pub const FBP_IMAGE: &str = "fbp_image.f64";
pub const RECON_IMAGE: &str = "recon_image.f64";
pub const RECON_SINO: &str = "recon_sinogram.f64";
pub const LOG_CSV: &str = "log.csv";
pub const LOG_JSON: &str = "log.json";
pub const METRICS: &str = "metrics.json";

pub struct Session {
    pub cfg: RunConfig,
    pub config_path: PathBuf,
    pub overrides: Vec<(String, String)>,
}

impl Session {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        Ok(())
    }

    fn manifest(&self, command: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        Manifest::new(command, &self.cfg, &self.config_path, &self.overrides, inputs, outputs)?
            .write(&self.cfg.output_dir)?;
        Ok(())
    }

    fn projector(&self) -> Result<Projector> {
        Ok(Projector::new(self.cfg.geometry.clone())?.with_mode(self.cfg.exec))
    }

    /// Reads a sinogram and checks it against the configured geometry and mask.
    fn read_measured(&self, path: &Path) -> Result<Sinogram> {
        let (s, geo) = read_sinogram(path)?;
        if geo.is_some_and(|g| g != self.cfg.geometry) {
            return Err(Error::input(format!(
                "{} was made with a different geometry",
                path.display()
            )));
        }
        if s.view_indices != self.cfg.view_mask()?.selected {
            return Err(Error::input(format!(
                "{} does not hold the configured views",
                path.display()
            )));
        }
        Ok(s)
    }
}

fn pgm_for(path: &Path) -> PathBuf {
    path.with_extension("pgm")
}

fn write_image_with_preview(path: &Path, img: &Image) -> Result<()> {
    write_image(path, img)?;
    write_pgm(&pgm_for(path), &img.values, img.grid.nx, img.grid.ny)
}

pub fn phantom(s: &Session) -> Result<()> {
    let spec = s
        .cfg
        .phantom
        .as_ref()
        .ok_or_else(|| Error::config("config has no [phantom] section"))?;
    s.prepare()?;
    let img = make_phantom(spec)?;
    let path = s.out(PHANTOM);
    write_image_with_preview(&path, &img)?;
    s.manifest("phantom", &[], std::slice::from_ref(&path))?;
    println!("phantom: {}x{} -> {}", img.grid.nx, img.grid.ny, path.display());
    Ok(())
}

pub fn simulate(s: &Session, phantom: Option<PathBuf>) -> Result<()> {
    s.prepare()?;
    let input = phantom.unwrap_or_else(|| s.out(PHANTOM));
    let img = read_image(&input)?;
    if img.grid != s.cfg.geometry.grid {
        return Err(Error::input("phantom grid differs from the configured geometry"));
    }
    let mask = s.cfg.view_mask()?;
    let (sparse, full) = simulate_measurement(&img, &s.cfg.geometry, &mask, &s.cfg.noise)?;
    let (sp, fp) = (s.out(SINO), s.out(SINO_FULL));
    write_sinogram(&sp, &sparse, Some(&s.cfg.geometry))?;
    write_sinogram(&fp, &full, Some(&s.cfg.geometry))?;
    s.manifest("simulate", &[input], &[sp.clone(), fp])?;
    println!(
        "simulate: {} of {} views, {} detectors -> {}",
        sparse.n_views(),
        full.n_views_full,
        sparse.n_dets,
        sp.display()
    );
    Ok(())
}

pub fn init(s: &Session, sinogram: Option<PathBuf>) -> Result<()> {
    s.prepare()?;
    let input = sinogram.unwrap_or_else(|| s.out(SINO));
    let meas = s.read_measured(&input)?;
    let st = initialize(&meas, &s.cfg.geometry, &s.cfg.view_mask()?)?;
    let (xp, zp) = (s.out(INIT_IMAGE), s.out(INIT_SINO));
    write_image_with_preview(&xp, &st.x)?;
    write_sinogram(&zp, &st.z, Some(&s.cfg.geometry))?;
    s.manifest("init", &[input], &[xp.clone(), zp])?;
    println!("init: -> {}", xp.display());
    Ok(())
}

pub fn fbp(s: &Session, sinogram: Option<PathBuf>) -> Result<()> {
    s.prepare()?;
    let input = sinogram.unwrap_or_else(|| s.out(SINO));
    let meas = s.read_measured(&input)?;
    let img = fbp_reconstruct(&meas, &s.cfg.geometry, FilterWindow::RamLak)?;
    let path = s.out(FBP_IMAGE);
    write_image_with_preview(&path, &img)?;
    s.manifest("fbp", &[input], std::slice::from_ref(&path))?;
    println!("fbp: -> {}", path.display());
    Ok(())
}

fn write_log(s: &Session, log: &IterateLog) -> Result<(PathBuf, PathBuf)> {
    let (csv, json) = (s.out(LOG_CSV), s.out(LOG_JSON));
    log.write_csv(BufWriter::new(File::create(&csv)?))?;
    fs::write(&json, log.to_json()?)?;
    Ok((csv, json))
}

pub fn reconstruct(
    s: &Session,
    sinogram: Option<PathBuf>,
    init_image: Option<PathBuf>,
    init_sinogram: Option<PathBuf>,
) -> Result<()> {
    s.prepare()?;
    let sp = sinogram.unwrap_or_else(|| s.out(SINO));
    let xp = init_image.unwrap_or_else(|| s.out(INIT_IMAGE));
    let zp = init_sinogram.unwrap_or_else(|| s.out(INIT_SINO));
    let meas = s.read_measured(&sp)?;
    let init = DualState {
        x: read_image(&xp)?,
        z: read_sinogram(&zp)?.0,
    };
    let reg = &s.cfg.regularizer;
    let spec = ProblemSpec::new(
        s.projector()?,
        s.cfg.view_mask()?,
        meas,
        s.cfg.lambda,
        reg.image.build(Domain::Image)?,
        reg.sinogram.build(Domain::Sinogram)?,
    )?;
    let inputs = [sp, xp, zp];
    let (out, log) = match run(&spec, &init, &s.cfg.solver) {
        Ok(r) => r,
        Err(Error::Solver { message, log }) => {
            let (csv, json) = write_log(s, &log)?;
            s.manifest("reconstruct", &inputs, &[csv, json])?;
            return Err(Error::Solver { message, log });
        }
        Err(e) => return Err(e),
    };
    let (rx, rz) = (s.out(RECON_IMAGE), s.out(RECON_SINO));
    write_image_with_preview(&rx, &out.x)?;
    write_sinogram(&rz, &out.z, Some(&s.cfg.geometry))?;
    let (csv, json) = write_log(s, &log)?;
    s.manifest("reconstruct", &inputs, &[rx.clone(), rz, csv, json])?;
    let last = log.records.last();
    println!(
        "reconstruct: {} iterations, {} smoothing reductions, final objective {} -> {}",
        log.len(),
        log.reductions(),
        last.map_or("n/a".to_string(), |r| format!("{:.6e}", r.phi_after)),
        rx.display()
    );
    Ok(())
}

pub fn metrics(
    test: &Path,
    reference: &Path,
    sinogram: Option<&Path>,
    mu: f64,
    data_range: Option<f64>,
    output: Option<&Path>,
) -> Result<()> {
    let (x, truth) = (read_image(test)?, read_image(reference)?);
    let mut rep = report(&x, &truth, data_range)?;
    if let Some(p) = sinogram {
        let (z, geo) = read_sinogram(p)?;
        let geo = geo.ok_or_else(|| Error::input(format!("{} carries no geometry", p.display())))?;
        rep.loss = Some(evaluate_loss(&DualState { x, z }, &truth, &Projector::new(geo)?, mu)?);
    }
    let json = rep.to_json()?;
    if let Some(o) = output {
        fs::write(o, &json)?;
    }
    println!(
        "{}",
        json.replace('\n', " ").split_whitespace().collect::<Vec<_>>().join(" ")
    );
    Ok(())
}

pub fn weights(
    domain: Domain,
    kind: WeightKind,
    strength: f64,
    seed: u64,
    layers: Option<usize>,
    channels: Option<usize>,
    output: &Path,
) -> Result<()> {
    let stack = match kind {
        WeightKind::Tv => make_tv_weights(domain, strength),
        WeightKind::Random => {
            let base = ArchSpec::default_for(domain);
            let arch = ArchSpec {
                layers: layers.unwrap_or(base.layers),
                channels: channels.unwrap_or(base.channels),
                ..base
            };
            make_random_weights(seed, &arch)?
        }
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_weights(output, &stack)?;
    println!(
        "weights: {} layers, {} output channels -> {}",
        stack.layers.len(),
        stack.layers.last().map_or(0, |l| l.out_channels),
        output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    fbp: MetricReport,
    lama: MetricReport,
}

pub fn run_all(s: &Session) -> Result<()> {
    phantom(s)?;
    simulate(s, None)?;
    init(s, None)?;
    fbp(s, None)?;
    reconstruct(s, None, None, None)?;
    let truth = read_image(&s.out(PHANTOM))?;
    let cmp = Comparison {
        fbp: report(&read_image(&s.out(FBP_IMAGE))?, &truth, None)?,
        lama: report(&read_image(&s.out(RECON_IMAGE))?, &truth, None)?,
    };
    let path = s.out(METRICS);
    fs::write(&path, serde_json::to_string_pretty(&cmp)?)?;
    println!(
        "metrics: fbp {:.2} dB / ssim {:.4}, lama {:.2} dB / ssim {:.4} -> {}",
        cmp.fbp.psnr_db.db(),
        cmp.fbp.ssim,
        cmp.lama.psnr_db.db(),
        cmp.lama.ssim,
        path.display()
    );
    Ok(())
}
