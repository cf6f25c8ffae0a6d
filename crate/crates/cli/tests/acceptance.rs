//! Acceptance suite: one test per criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (written straight to stderr so it survives output
//! capture).

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use glam::DVec3;
use serde_json::Value;
use tetvol::compare::outlier_fraction;
use tetvol::gen::{generate, Kind};
use tetvol_core::builder::{read_grid, write_grid};
use tetvol_core::leb_grid::{face_normal_id, Vertex, FACE_NORMALS, FACE_VERTS, FIXED_ONE, TET_EDGES};
use tetvol_core::reference_grid::render_reference;
use tetvol_core::tracer::{
    march_segments, march_transmittance, rng::uniform, sample_free_path, sample_phase_hg, FreePath,
    MarchStats, RngStream,
};
use tetvol_core::*;

fn check(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let result = match result {
        Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}")),
        other => other,
    };
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let line = format!("[{tag}] criterion {id:>2} {title}: {detail} ({elapsed:.2?})\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = result {
        panic!("criterion {id} failed: {e}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Seeded sequence of uniforms independent of the renderer's keys.
struct Seq(RngStream);

impl Seq {
    fn new(seed: u64) -> Self {
        Seq(RngStream::new(seed, u64::MAX, u64::MAX))
    }
    fn next(&mut self) -> f64 {
        self.0.next_f64()
    }
    fn point(&mut self) -> DVec3 {
        DVec3::new(self.next(), self.next(), self.next())
    }
}

/// The grid after 1000 seeded random conforming refinements, calling `each`
/// after every call.
fn fuzzed_grid(mut each: impl FnMut(&TetGrid) -> Result<(), String>) -> Result<TetGrid, String> {
    let mut g = TetGrid::init_roots();
    let mut s = Seq::new(2024);
    for call in 0..1000 {
        let leaves: Vec<TetId> = g.leaves().collect();
        let t = leaves[(s.next() * leaves.len() as f64) as usize];
        g.refine_conforming(t).map_err(|e| format!("call {call}: {e}"))?;
        each(&g).map_err(|e| format!("after call {call}: {e}"))?;
    }
    Ok(g)
}

fn random_ray(s: &mut Seq) -> Ray {
    loop {
        let o = s.point() * 3.0 - DVec3::ONE;
        let target = s.point();
        if (target - o).length() > 1e-6 {
            return Ray::new(o, target - o);
        }
    }
}

fn chord(ray: &Ray) -> f64 {
    tetvol_core::ray::intersect_unit_cube(ray).map_or(0.0, |(a, b)| b - a)
}

fn sorted_sq_edges(v: [Vertex; 4]) -> [u64; 6] {
    let mut e = TET_EDGES.map(|[a, b]| v[a].squared_distance(v[b]));
    e.sort_unstable();
    e
}

#[test]
fn criterion_01_root_tessellation() {
    check(1, "root tessellation", Duration::from_secs(1), || {
        let g = TetGrid::init_roots();
        ensure(g.leaf_count() == 24, || format!("{} leaves", g.leaf_count()))?;
        let worst = g.leaves().map(|t| (g.volume(t) - 1.0 / 24.0).abs()).fold(0.0, f64::max);
        ensure(worst <= 1e-12, || format!("volume error {worst:e}"))?;
        let r = g.validate();
        ensure(r.is_ok(), || r.to_string())?;
        Ok(format!("24 leaves, max volume error {worst:.1e}, validate ok"))
    });
}

#[test]
fn criterion_02_uniform_depth_closure() {
    check(2, "uniform-depth closure", Duration::from_secs(5), || {
        let mut g = TetGrid::init_roots();
        g.refine_uniform(6).map_err(|e| e.to_string())?;
        ensure(g.leaf_count() == 1536, || format!("{} leaves", g.leaf_count()))?;
        let worst = g.leaves().map(|t| (g.volume(t) - 1.0 / 1536.0).abs()).fold(0.0, f64::max);
        ensure(worst <= 1e-12, || format!("volume error {worst:e}"))?;
        let root = sorted_sq_edges(g.positions(g.roots()[0]));
        let scaled = root.map(|e| e / 16);
        ensure(root.iter().all(|e| e % 16 == 0), || "root edges not divisible".into())?;
        for t in g.leaves() {
            let e = sorted_sq_edges(g.positions(t));
            ensure(e == scaled, || format!("leaf {t:?} edges {e:?} vs {scaled:?}"))?;
        }
        Ok(format!("1536 leaves congruent to roots scaled 1/4, max volume error {worst:.1e}"))
    });
}

#[test]
fn criterion_03_conformity_fuzz() {
    check(3, "conformity fuzz", Duration::from_secs(30), || {
        let mut last = None;
        let g = fuzzed_grid(|g| {
            let r = g.validate();
            ensure(r.is_ok(), || r.to_string())?;
            last = Some((r.interior_faces, r.boundary_faces));
            Ok(())
        })?;
        let (i, b) = last.unwrap();
        Ok(format!(
            "1000 calls, validate ok after each; final {} leaves, {i} interior faces matched twice, {b} boundary faces, 0 T-junctions",
            g.leaf_count()
        ))
    });
}

#[test]
fn criterion_04_eighteen_orientations() {
    check(4, "18-orientation closure", Duration::from_secs(10), || {
        let g = fuzzed_grid(|_| Ok(()))?;
        let mut worst: f64 = 0.0;
        let mut faces = 0;
        for t in g.leaves() {
            let p = g.positions(t);
            let x = p.map(|v| v.to_dvec3());
            for f in 0..4 {
                let [a, b, c] = FACE_VERTS[f];
                face_normal_id(p[a], p[b], p[c], p[f]).map_err(|e| format!("leaf {t:?} face {f}: {e}"))?;
                let mut n = (x[b] - x[a]).cross(x[c] - x[a]).normalize();
                if n.dot(x[f] - x[a]) > 0.0 {
                    n = -n;
                }
                let best = FACE_NORMALS
                    .iter()
                    .flat_map(|c| [DVec3::from_array(*c), -DVec3::from_array(*c)])
                    .map(|c| (c - n).length())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
                faces += 1;
            }
        }
        ensure(worst <= 1e-12, || format!("normal off the table by {worst:e}"))?;
        Ok(format!("{faces} leaf faces, max deviation {worst:.1e}, no NotCanonical"))
    });
}

#[test]
fn criterion_05_traversal_oracle() {
    check(5, "traversal oracle", Duration::from_secs(60), || {
        let g = fuzzed_grid(|_| Ok(()))?;
        let mut s = Seq::new(5);
        let mut crossing = 0;
        let mut worst: f64 = 0.0;
        for i in 0..10_000 {
            let ray = random_ray(&mut s);
            let marched = march_segments(&g, &ray, &mut MarchStats::default());
            let brute = g.brute_force_segments(&ray);
            ensure(marched.len() == brute.len(), || {
                format!("ray {i}: {} marched vs {} oracle segments", marched.len(), brute.len())
            })?;
            for (m, b) in marched.iter().zip(&brute) {
                ensure(m.tet == b.tet, || format!("ray {i}: cell {:?} vs {:?}", m.tet, b.tet))?;
                worst = worst.max((m.length() - b.length()).abs());
            }
            let total: f64 = marched.iter().map(|m| m.length()).sum();
            worst = worst.max((total - chord(&ray)).abs());
            crossing += usize::from(!marched.is_empty());
        }
        ensure(worst <= 1e-9, || format!("length error {worst:e}"))?;
        Ok(format!("10000 rays ({crossing} crossing the cube), sequences equal, max length error {worst:.1e}"))
    });
}

#[test]
fn criterion_06_analytic_transmittance() {
    check(6, "analytic transmittance", Duration::from_secs(10), || {
        let vol = DenseVolume::constant([16; 3], 1.0).map_err(|e| e.to_string())?;
        let cfg = BuildConfig { density_scale: 2.0, ..Default::default() };
        let mut tet = build_adaptive_grid(&vol, &cfg, None).map_err(|e| e.to_string())?.grid;
        // refine so rays cross many cells
        tet.refine_uniform(6).map_err(|e| e.to_string())?;
        for t in tet.leaves().collect::<Vec<_>>() {
            tet.set_payload(t, MediaPayload::with_density(2.0));
        }
        let reg = RegularGrid::from_volume(&vol).with_density_scale(2.0);
        let mut s = Seq::new(6);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let ray = random_ray(&mut s);
            let want = (-2.0 * chord(&ray)).exp();
            worst = worst.max((march_transmittance(&tet, &ray, &mut MarchStats::default()) - want).abs());
            worst = worst.max((march_transmittance(&reg, &ray, &mut MarchStats::default()) - want).abs());
        }
        ensure(worst <= 1e-6, || format!("error {worst:e}"))?;
        Ok(format!("1000 rays on both grids, max |T - exp(-2L)| = {worst:.1e}"))
    });
}

#[test]
fn criterion_07_free_path_distribution() {
    check(7, "free-path distribution", Duration::from_secs(30), || {
        let lambda = 2.0;
        let mut g = TetGrid::init_roots();
        g.refine_uniform(3).map_err(|e| e.to_string())?;
        for t in g.leaves().collect::<Vec<_>>() {
            g.set_payload(t, MediaPayload::with_density(lambda as f32));
        }
        let ray = Ray::new(DVec3::new(0.37, 0.61, -0.5), DVec3::Z);
        let (t0, t1) = tetvol_core::ray::intersect_unit_cube(&ray).unwrap();
        let len = t1 - t0;
        let n = 100_000;
        let mut dists = Vec::with_capacity(n);
        let mut escaped = 0usize;
        let mut st = MarchStats::default();
        for i in 0..n {
            match sample_free_path(&g, &ray, None, uniform(7, i as u64, 0, 0), &mut st) {
                FreePath::Collision { t, .. } => dists.push(t - t0),
                FreePath::Escaped => escaped += 1,
                FreePath::Aborted => return Err(format!("sample {i} aborted")),
            }
        }
        // collisions follow the exponential conditioned on t < L
        let norm = 1.0 - (-lambda * len).exp();
        dists.sort_by(f64::total_cmp);
        let m = dists.len() as f64;
        let ks = dists
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let f = (1.0 - (-lambda * d).exp()) / norm;
                (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
            })
            .fold(0.0, f64::max);
        let critical = 1.628 / m.sqrt();
        ensure(ks < critical, || format!("KS {ks:.5} >= {critical:.5}"))?;
        let p = (-lambda * len).exp();
        let p_hat = escaped as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        ensure((p_hat - p).abs() <= 3.0 * se, || format!("escape {p_hat:.5} vs {p:.5} (se {se:.5})"))?;
        Ok(format!(
            "KS {ks:.5} < {critical:.5} over {} collisions; escape {p_hat:.5} vs exp(-2) = {p:.5}, {:.2} se",
            dists.len(),
            (p_hat - p).abs() / se
        ))
    });
}

/// HG CDF over cos(theta) by midpoint quadrature of the density.
fn hg_cdf_numeric(g: f64, mu: f64) -> f64 {
    let steps = 20_000;
    let h = (mu + 1.0) / steps as f64;
    (0..steps)
        .map(|i| {
            let m = -1.0 + (i as f64 + 0.5) * h;
            0.5 * (1.0 - g * g) / (1.0 + g * g - 2.0 * g * m).powf(1.5) * h
        })
        .sum()
}

#[test]
fn criterion_08_phase_sampling() {
    check(8, "phase sampling", Duration::from_secs(30), || {
        let dir = DVec3::new(0.2, -0.5, 0.8).normalize();
        // isotropic: chi-square over 20 bins of cos(theta)
        let n = 100_000;
        let mut bins = [0usize; 20];
        for i in 0..n {
            let w = sample_phase_hg(dir, 0.0, uniform(8, i, 0, 0), uniform(8, i, 0, 1));
            let c = w.dot(dir).clamp(-1.0, 1.0 - 1e-15);
            bins[((c + 1.0) * 10.0) as usize] += 1;
        }
        let expected = n as f64 / 20.0;
        let chi2: f64 = bins.iter().map(|b| (*b as f64 - expected).powi(2) / expected).sum();
        // 19 degrees of freedom, 1% level
        ensure(chi2 < 36.191, || format!("chi2 {chi2:.2}"))?;
        let mut detail = format!("g=0 chi2 {chi2:.2} < 36.19");
        for g in [0.3, 0.9] {
            let n = 1_000_000u64;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for i in 0..n {
                let c = sample_phase_hg(dir, g, uniform(9, i, 0, 0), uniform(9, i, 0, 1)).dot(dir);
                sum += c;
                sum2 += c * c;
            }
            let mean = sum / n as f64;
            let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
            ensure((mean - g).abs() <= 3.0 * se, || format!("g={g}: mean {mean:.5} (se {se:.5})"))?;
            detail += &format!("; g={g} mean cos {mean:.5} ({:.2} se)", (mean - g).abs() / se);
        }
        // independent inversion of the numerically integrated CDF
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if hg_cdf_numeric(0.9, mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sampled = tetvol_core::tracer::hg_cos_theta(0.9, 0.5);
        ensure((sampled - lo).abs() < 1e-6, || format!("inversion {sampled} vs {lo}"))?;
        Ok(detail + &format!("; g=0.9 xi=0.5 -> {sampled:.6} vs numeric {lo:.6}"))
    });
}

#[test]
fn criterion_09_renderer_cross_oracle() {
    check(9, "renderer cross-oracle", Duration::from_secs(600), || {
        let vol = DenseVolume::constant([32; 3], 1.0).map_err(|e| e.to_string())?;
        let bcfg = BuildConfig { density_scale: 4.0, ..Default::default() };
        let tet = build_adaptive_grid(&vol, &bcfg, None).map_err(|e| e.to_string())?.grid;
        let reg = RegularGrid::from_volume(&vol).with_density_scale(4.0);
        let cam = PinholeCamera::look_at(DVec3::new(1.7, 1.3, -1.2), DVec3::splat(0.5), DVec3::Y, 50.0, 64, 64)
            .map_err(|e| e.to_string())?;
        let cfg = RenderConfig { spp: 1024, seed: 9, default_albedo: 0.8, hg_g: 0.0, ..Default::default() };
        let a = render(&tet, &cam, &cfg);
        let b = render_reference(&reg, &cam, &cfg);
        let se = |img: &ImageAccumulator| img.pixels().iter().map(|p| p.std_error()).collect::<Vec<_>>();
        let frac = outlier_fraction(&a.means(), &se(&a), &b.means(), &se(&b), 3.0);
        let rmse = tetvol::compare::rmse(&a.means(), &b.means());
        ensure(frac < 0.01, || format!("{:.2}% of pixels beyond 3 sigma", frac * 100.0))?;
        // unpaired seeds, reported only
        let c = render_reference(&reg, &cam, &RenderConfig { seed: 10, ..cfg });
        let frac_c = outlier_fraction(&a.means(), &se(&a), &c.means(), &se(&c), 3.0);
        let rmse_c = tetvol::compare::rmse(&a.means(), &c.means());
        Ok(format!(
            "paired: {:.3}% pixels beyond 3 sigma, RMSE {rmse:.2e}; unpaired: {:.3}%, RMSE {rmse_c:.2e}; tet {:.1}s, regular {:.1}s",
            frac * 100.0,
            frac_c * 100.0,
            a.seconds,
            b.seconds
        ))
    });
}

fn tetvol(dir: &Path, args: &[&str]) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tetvol"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tetvol {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("tetvol {args:?}: {e}"))
}

const SCENE_JOB: &str = "
[camera]
position = 1.6 1.1 -1.4
target = 0.5 0.5 0.5
up = 0 1 0
fov = 45
width = 64
height = 64

[build]
threshold = 0.5
max_level = 10
density_scale = 8

[render]
spp = 16
seed = 1
g = 0.3
albedo = 0.8
environment = 1 1 1
";

#[test]
fn criterion_10_adaptivity() {
    check(10, "adaptivity", Duration::from_secs(600), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        std::fs::write(d.join("job.cfg"), SCENE_JOB).map_err(|e| e.to_string())?;
        let mut detail = Vec::new();
        for scene in ["step", "blob"] {
            let dvol = format!("{scene}.dvol");
            let tgrid = format!("{scene}.tgrid");
            tetvol(d, &["gen", scene, "64", &dvol])?;
            let built = tetvol(d, &["build", &dvol, "-o", &tgrid, "-c", "job.cfg"])?;
            let render = |input: &str, tag: &str, extra: &[&str]| {
                let pfm = format!("{scene}-{tag}.pfm");
                let stats = format!("{scene}-{tag}.json");
                let mut args = vec!["render", input, "-c", "job.cfg", "--pfm", &pfm, "--stats", &stats];
                args.extend_from_slice(extra);
                tetvol(d, &args).map(|_| (pfm, stats))
            };
            let (tet_pfm, tet_stats) = render(&tgrid, "tet", &[])?;
            let (ref_pfm, ref_stats) = render(&dvol, "reg", &["--reference"])?;
            let (truth, _) = render(&dvol, "truth", &["--reference", "--set", "render.spp=512", "--set", "render.seed=999"])?;
            let report = tetvol(
                d,
                &[
                    "compare", "--tet", &tet_pfm, "--tet-stats", &tet_stats, "--reference", &ref_pfm,
                    "--reference-stats", &ref_stats, "--truth", &truth,
                ],
            )?;
            let num = |v: &Value, k: &str| v[k].as_f64().ok_or_else(|| format!("{scene}: no {k} in {v}"));
            let leaves = num(&built, "leafCount")?;
            let error_ratio = num(&report, "errorRatio")?;
            let cell_ratio = num(&report, "cellCountRatio")?;
            let visit_ratio = num(&report, "cellsVisitedRatio")?;
            let speedup = num(&report, "speedup")?;
            let line = format!(
                "{scene}: {leaves} leaves (x{cell_ratio:.1} fewer), cells/path x{visit_ratio:.2} fewer, error ratio {error_ratio:.3}, speedup x{speedup:.2}"
            );
            ensure(error_ratio <= 1.02, || format!("{line}: error not matched"))?;
            ensure(cell_ratio >= 5.0, || format!("{line}: too many cells"))?;
            ensure(visit_ratio >= 2.0, || format!("{line}: too many cells visited"))?;
            detail.push(line);
        }
        Ok(detail.join("; "))
    });
}

#[test]
fn criterion_11_camera_criteria() {
    check(11, "camera criteria", Duration::from_secs(60), || {
        let vol = generate(Kind::Noise, 32).map_err(|e| e.to_string())?;
        let cam = PinholeCamera::look_at(DVec3::splat(-0.6), DVec3::splat(0.25), DVec3::Y, 25.0, 64, 64)
            .map_err(|e| e.to_string())?;
        let cfg = BuildConfig { variation_threshold: 0.2, max_level: 12, use_camera: true, ..Default::default() };
        let with = build_adaptive_grid(&vol, &cfg, Some(&cam)).map_err(|e| e.to_string())?;
        for t in &with.criterion_splits {
            ensure(!cam.tet_outside_frustum(&with.grid.geometry(*t)), || {
                format!("tet {t:?} outside the frustum was split by its own criteria")
            })?;
        }
        let outside_leaves = with.grid.leaves().filter(|t| cam.tet_outside_frustum(&with.grid.geometry(*t))).count();
        let without = build_adaptive_grid(&vol, &BuildConfig { use_camera: false, ..cfg }, None)
            .map_err(|e| e.to_string())?;
        let (a, b) = (with.grid.leaf_count(), without.grid.leaf_count());
        ensure(b > a, || format!("camera off {b} leaves vs on {a}"))?;
        ensure(with.grid.validate().is_ok(), || "camera build invalid".into())?;
        Ok(format!(
            "{} criterion splits all in view, {} forced splits, {outside_leaves} leaves outside the frustum; leaves {a} with camera vs {b} without",
            with.criterion_splits.len(),
            with.forced_splits
        ))
    });
}

#[test]
fn criterion_12_determinism() {
    check(12, "determinism", Duration::from_secs(120), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        std::fs::write(d.join("job.cfg"), SCENE_JOB).map_err(|e| e.to_string())?;
        tetvol(d, &["gen", "noise", "32", "n.dvol"])?;
        tetvol(d, &["build", "n.dvol", "-o", "n.tgrid", "-c", "job.cfg"])?;
        let base = ["render", "n.tgrid", "-c", "job.cfg", "--set", "render.spp=4", "--set", "render.seed=77"];
        let mut one = base.to_vec();
        one.extend(["--set", "render.threads=1", "--pfm", "one.pfm"]);
        let mut three = base.to_vec();
        three.extend(["--set", "render.threads=3", "--pfm", "three.pfm"]);
        tetvol(d, &one)?;
        tetvol(d, &three)?;
        let read = |p: &str| std::fs::read(d.join(p)).map_err(|e| e.to_string());
        ensure(read("one.pfm")? == read("three.pfm")?, || "PFM differs between thread counts".into())?;

        let grid_bytes = read("n.tgrid")?;
        let grid = read_grid(&mut grid_bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_grid(&grid, &mut again).map_err(|e| e.to_string())?;
        ensure(again == grid_bytes, || ".tgrid re-serialization differs".into())?;

        let vol_bytes = read("n.dvol")?;
        let vol = DenseVolume::from_dvol_bytes(&vol_bytes).map_err(|e| e.to_string())?;
        ensure(vol.to_dvol_bytes() == vol_bytes, || ".dvol re-serialization differs".into())?;
        Ok(format!(
            "PFM identical for 1 and 3 threads ({} bytes); .tgrid ({} bytes) and .dvol ({} bytes) round-trips identical",
            read("one.pfm")?.len(),
            grid_bytes.len(),
            vol_bytes.len()
        ))
    });
}

#[test]
fn fixed_point_scale_is_24_bits() {
    assert_eq!(FIXED_ONE, 1 << 24);
}
