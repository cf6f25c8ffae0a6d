//! Command-line workflows: generate volumes, build grids, render, compare,
//! validate and inspect.
//!
//! Every command writes a JSON object to standard output. Diagnostics go to
//! standard error. Exit codes: 0 on success, 1 on runtime or validation
//! failure, 2 on usage or configuration errors.

pub mod compare;
pub mod config;
pub mod gen;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use glam::DVec3;
use serde_json::{json, Value};
use tetvol_core::builder::{load_grid, read_grid, save_grid, TGRID_MAGIC};
use tetvol_core::reference_grid::render_reference;
use tetvol_core::tracer::{march_segments, read_pfm, rng, MarchStats};
use tetvol_core::volume::DVOL_MAGIC;
use tetvol_core::{build_adaptive_grid, render, DenseVolume, ImageAccumulator, Ray, RegularGrid, TetGrid};
use thiserror::Error;

use crate::compare::{RenderStats, Side};
use crate::config::{ConfigError, JobConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Validation(_) | CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tetvol", version, about = "Adaptive tetrahedral volume grids and a path tracer over them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct JobArgs {
    /// Job file with [camera], [build] and [render] sections.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set render.spp=64`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl JobArgs {
    pub fn load(&self) -> Result<JobConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => JobConfig::load(p)?,
            None => JobConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural dense volume.
    Gen {
        #[arg(value_enum)]
        kind: gen::Kind,
        /// Voxels per axis.
        n: usize,
        output: PathBuf,
    },
    /// Build an adaptive grid from a dense volume and save it.
    Build {
        volume: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        job: JobArgs,
    },
    /// Render a grid (.tgrid), or a volume (.dvol) built on the fly.
    Render {
        input: PathBuf,
        /// Render the volume on its regular voxel grid instead.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        ppm: Option<PathBuf>,
        #[arg(long)]
        pfm: Option<PathBuf>,
        /// Per-pixel standard error of the mean, as a PFM.
        #[arg(long)]
        stderr_pfm: Option<PathBuf>,
        /// Also write the stats JSON here.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        job: JobArgs,
    },
    /// Compare a tetrahedral render with a reference render.
    Compare {
        #[arg(long)]
        tet: PathBuf,
        #[arg(long)]
        tet_stats: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        reference_stats: PathBuf,
        #[arg(long)]
        tet_stderr: Option<PathBuf>,
        #[arg(long)]
        reference_stderr: Option<PathBuf>,
        /// High-sample image both renders are measured against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Check grid invariants and spot-check ray traversal.
    Validate {
        grid: PathBuf,
        #[arg(long, default_value_t = 100)]
        rays: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a .dvol or .tgrid file.
    Stats { input: PathBuf },
}

enum Input {
    Volume(DenseVolume),
    Grid(TetGrid),
}

fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match bytes.get(..4) {
        Some(m) if m == DVOL_MAGIC => Ok(Input::Volume(
            DenseVolume::from_dvol_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?,
        )),
        Some(m) if m == TGRID_MAGIC => Ok(Input::Grid(
            read_grid(&mut bytes.as_slice())
                .with_context(|| format!("parsing {}", path.display()))?,
        )),
        _ => Err(anyhow!("{}: neither a .dvol nor a .tgrid file", path.display()).into()),
    }
}

fn write_json(out: &mut dyn Write, v: &Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).context("encoding JSON")?).context("writing output")?;
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { kind, n, output } => {
            let vol = gen::generate(kind, n).map_err(|e| CliError::Usage(e.to_string()))?;
            vol.save_dvol(&output).with_context(|| format!("writing {}", output.display()))?;
            write_json(out, &json!({ "kind": format!("{kind:?}").to_lowercase(), "dims": vol.dims(), "path": output }))
        }
        Command::Build { volume, output, job } => cmd_build(&volume, &output, &job, out),
        Command::Render { input, reference, ppm, pfm, stderr_pfm, stats, job } => {
            let outputs = RenderOutputs { ppm, pfm, stderr_pfm, stats };
            cmd_render(&input, reference, &outputs, &job, out)
        }
        Command::Compare { tet, tet_stats, reference, reference_stats, tet_stderr, reference_stderr, truth } => {
            cmd_compare(
                (&tet, &tet_stats, tet_stderr.as_deref()),
                (&reference, &reference_stats, reference_stderr.as_deref()),
                truth.as_deref(),
                out,
            )
        }
        Command::Validate { grid, rays, seed } => cmd_validate(&grid, rays, seed, out),
        Command::Stats { input } => cmd_stats(&input, out),
    }
}

fn cmd_build(volume: &Path, output: &Path, job: &JobArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let job = job.load()?;
    let cfg = job.build()?;
    let cam = if cfg.use_camera { Some(job.camera()?) } else { None };
    let vol = DenseVolume::load_dvol(volume).with_context(|| format!("loading {}", volume.display()))?;
    let built = build_adaptive_grid(&vol, &cfg, cam.as_ref()).context("building grid")?;
    let report = built.grid.validate();
    if !report.is_ok() {
        return Err(CliError::Validation(report.to_string()));
    }
    save_grid(&built.grid, output).with_context(|| format!("writing {}", output.display()))?;
    write_json(
        out,
        &json!({
            "schema": compare::STATS_SCHEMA,
            "leafCount": built.grid.leaf_count(),
            "maxDepthReached": built.grid.depth(),
            "buildSeconds": built.seconds,
            "criterionSplits": built.criterion_splits.len(),
            "forcedSplits": built.forced_splits,
            "volumeDims": vol.dims(),
        }),
    )
}

pub struct RenderOutputs {
    pub ppm: Option<PathBuf>,
    pub pfm: Option<PathBuf>,
    pub stderr_pfm: Option<PathBuf>,
    pub stats: Option<PathBuf>,
}

fn cmd_render(
    input: &Path,
    reference: bool,
    outputs: &RenderOutputs,
    job: &JobArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let job = job.load()?;
    let cam = job.camera()?;
    let rcfg = job.render()?;
    let (img, renderer, cells) = match (read_input(input)?, reference) {
        (Input::Volume(vol), true) => {
            let grid = RegularGrid::from_volume(&vol).with_density_scale(job.build()?.density_scale);
            (render_reference(&grid, &cam, &rcfg), "reference", vol.voxel_count())
        }
        (Input::Grid(_), true) => {
            return Err(CliError::Usage("--reference needs a .dvol volume as input".into()));
        }
        (Input::Volume(vol), false) => {
            let bcfg = job.build()?;
            let cam_for_build = bcfg.use_camera.then_some(&cam);
            let built = build_adaptive_grid(&vol, &bcfg, cam_for_build).context("building grid")?;
            (render(&built.grid, &cam, &rcfg), "tet", built.grid.leaf_count())
        }
        (Input::Grid(grid), false) => {
            let n = grid.leaf_count();
            (render(&grid, &cam, &rcfg), "tet", n)
        }
    };
    let write = |path: &Option<PathBuf>, bytes: Vec<u8>| -> Result<(), CliError> {
        if let Some(p) = path {
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    };
    write(&outputs.ppm, img.to_ppm_bytes(rcfg.exposure, rcfg.gamma))?;
    write(&outputs.pfm, img.to_pfm_bytes())?;
    write(&outputs.stderr_pfm, std_error_image(&img).to_pfm_bytes())?;
    let stats = RenderStats::from_image(renderer, &img, rcfg.spp, cells).to_json();
    write(&outputs.stats, serde_json::to_vec_pretty(&stats).context("encoding JSON")?)?;
    write_json(out, &stats)
}

/// Image whose pixels are the standard errors of `img`.
pub fn std_error_image(img: &ImageAccumulator) -> ImageAccumulator {
    let mut se = ImageAccumulator::new(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            se.add_sample(x, y, img.pixel(x, y).std_error());
        }
    }
    se
}

fn load_pfm(path: &Path) -> Result<(u32, u32, Vec<DVec3>), CliError> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_pfm(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))?)
}

fn load_stats(path: &Path) -> Result<RenderStats, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(RenderStats::from_json(&v).map_err(|e| anyhow!("{}: {e}", path.display()))?)
}

type RenderFiles<'a> = (&'a Path, &'a Path, Option<&'a Path>);

fn cmd_compare(
    tet: RenderFiles,
    reference: RenderFiles,
    truth: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let load_side = |(img, stats, se): RenderFiles| -> Result<_, CliError> {
        let image = load_pfm(img)?.2;
        let se = se.map(load_pfm).transpose()?.map(|s| s.2);
        Ok((image, se, load_stats(stats)?))
    };
    let (ti, tse, ts) = load_side(tet)?;
    let (ri, rse, rs) = load_side(reference)?;
    let truth = truth.map(load_pfm).transpose()?.map(|t| t.2);
    let report = compare::compare(
        &Side { image: &ti, std_error: tse.as_deref(), stats: &ts },
        &Side { image: &ri, std_error: rse.as_deref(), stats: &rs },
        truth.as_deref(),
    )
    .map_err(|e| anyhow!(e))?;
    write_json(out, &report.to_json())
}

/// Compares marching with the brute-force oracle along `rays` seeded rays.
/// Returns the first mismatch.
pub fn spot_check_rays(grid: &TetGrid, rays: u32, seed: u64) -> Result<(), String> {
    for i in 0..rays as u64 {
        let u = |d: u64| rng::uniform(seed, i, 0, d);
        let origin = DVec3::new(u(0), u(1), u(2)) * 3.0 - DVec3::ONE;
        let target = DVec3::new(u(3), u(4), u(5));
        if (target - origin).length() < 1e-9 {
            continue;
        }
        let ray = Ray::new(origin, target - origin);
        let marched = march_segments(grid, &ray, &mut MarchStats::default());
        let brute = grid.brute_force_segments(&ray);
        let same = marched.len() == brute.len()
            && marched
                .iter()
                .zip(&brute)
                .all(|(a, b)| a.tet == b.tet && (a.length() - b.length()).abs() < 1e-9);
        if !same {
            return Err(format!(
                "ray {i} from {origin} towards {target}: marching visited {} cells, oracle {}",
                marched.len(),
                brute.len()
            ));
        }
    }
    Ok(())
}

fn cmd_validate(path: &Path, rays: u32, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let grid = load_grid(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let report = grid.validate();
    let traversal = if report.is_ok() { spot_check_rays(&grid, rays, seed) } else { Ok(()) };
    let ok = report.is_ok() && traversal.is_ok();
    write_json(
        out,
        &json!({
            "ok": ok,
            "leafCount": report.leaf_count,
            "interiorFaces": report.interior_faces,
            "boundaryFaces": report.boundary_faces,
            "violation": report.violation.as_ref().map(|v| v.to_string()),
            "traversal": traversal.as_ref().err(),
            "raysChecked": rays,
        }),
    )?;
    match (report.violation, traversal) {
        (Some(v), _) => Err(CliError::Validation(v.to_string())),
        (None, Err(e)) => Err(CliError::Validation(e)),
        (None, Ok(())) => Ok(()),
    }
}

fn cmd_stats(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    match read_input(path)? {
        Input::Volume(vol) => {
            let d = vol.density();
            let sum: f64 = d.iter().map(|v| *v as f64).sum();
            write_json(
                out,
                &json!({
                    "kind": "volume",
                    "dims": vol.dims(),
                    "channels": vol.channels().iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
                    "densityMin": d.iter().cloned().fold(f32::INFINITY, f32::min),
                    "densityMax": d.iter().cloned().fold(f32::NEG_INFINITY, f32::max),
                    "densityMean": sum / d.len() as f64,
                }),
            )
        }
        Input::Grid(grid) => {
            let mut levels = vec![0usize; grid.depth() as usize + 1];
            for t in grid.leaves() {
                levels[grid.tet(t).level as usize] += 1;
            }
            write_json(
                out,
                &json!({
                    "kind": "grid",
                    "leafCount": grid.leaf_count(),
                    "tetCount": grid.tets().len(),
                    "vertexCount": grid.vertices().len(),
                    "maxDepthReached": grid.depth(),
                    "leavesPerLevel": levels,
                    "valid": grid.validate().is_ok(),
                }),
            )
        }
    }
}
