//! Render statistics files and image comparison.

use glam::DVec3;
use serde_json::{json, Value};
use tetvol_core::ImageAccumulator;

pub const STATS_SCHEMA: u64 = 1;

/// Contents of a render stats JSON file.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderStats {
    /// `"tet"` or `"reference"`.
    pub renderer: String,
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    pub cells_visited: u64,
    pub paths: u64,
    pub degenerate_paths: u64,
    pub seconds: f64,
    /// Leaves of the tetrahedral grid, or voxels of the regular grid.
    pub leaf_count: u64,
}

impl RenderStats {
    pub fn from_image(renderer: &str, img: &ImageAccumulator, spp: u32, leaf_count: usize) -> Self {
        Self {
            renderer: renderer.into(),
            width: img.width(),
            height: img.height(),
            spp,
            cells_visited: img.cells_visited,
            paths: img.paths,
            degenerate_paths: img.degenerate_paths,
            seconds: img.seconds,
            leaf_count: leaf_count as u64,
        }
    }

    pub fn cells_per_path(&self) -> f64 {
        self.cells_visited as f64 / self.paths.max(1) as f64
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": STATS_SCHEMA,
            "renderer": self.renderer,
            "width": self.width,
            "height": self.height,
            "spp": self.spp,
            "cellsVisited": self.cells_visited,
            "paths": self.paths,
            "cellsPerPath": self.cells_per_path(),
            "degeneratePaths": self.degenerate_paths,
            "seconds": self.seconds,
            "leafCount": self.leaf_count,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let u = |k: &str| v[k].as_u64().ok_or_else(|| format!("stats field {k} missing or not an integer"));
        let f = |k: &str| v[k].as_f64().ok_or_else(|| format!("stats field {k} missing or not a number"));
        if u("schema")? != STATS_SCHEMA {
            return Err(format!("unsupported stats schema {}", v["schema"]));
        }
        Ok(Self {
            renderer: v["renderer"].as_str().unwrap_or("unknown").into(),
            width: u("width")? as u32,
            height: u("height")? as u32,
            spp: u("spp")? as u32,
            cells_visited: u("cellsVisited")?,
            paths: u("paths")?,
            degenerate_paths: u("degeneratePaths")?,
            seconds: f("seconds")?,
            leaf_count: u("leafCount")?,
        })
    }
}

/// Root mean squared difference over all pixels and channels.
pub fn rmse(a: &[DVec3], b: &[DVec3]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).length_squared()).sum();
    (sum / (3 * a.len()) as f64).sqrt()
}

/// Fraction of pixels where some channel differs by more than `k` combined
/// standard errors.
pub fn outlier_fraction(a: &[DVec3], a_se: &[DVec3], b: &[DVec3], b_se: &[DVec3], k: f64) -> f64 {
    assert!(a.len() == b.len() && a.len() == a_se.len() && b.len() == b_se.len());
    if a.is_empty() {
        return 0.0;
    }
    let outliers = (0..a.len())
        .filter(|&i| {
            let diff = (a[i] - b[i]).abs();
            let sigma = (a_se[i] * a_se[i] + b_se[i] * b_se[i]).map(f64::sqrt);
            (0..3).any(|c| diff[c] > k * sigma[c])
        })
        .count();
    outliers as f64 / a.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rmse: f64,
    pub outlier_fraction: Option<f64>,
    /// Reference seconds over tetrahedral seconds.
    pub speedup: f64,
    /// Reference cells per path over tetrahedral cells per path.
    pub cells_visited_ratio: f64,
    /// Reference cell count over tetrahedral leaf count.
    pub cell_count_ratio: f64,
    /// RMSE of each render against a third, high-quality image.
    pub truth_errors: Option<(f64, f64)>,
}

impl CompareReport {
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "schema": STATS_SCHEMA,
            "rmse": self.rmse,
            "outlierFraction": self.outlier_fraction,
            "speedup": self.speedup,
            "cellsVisitedRatio": self.cells_visited_ratio,
            "cellCountRatio": self.cell_count_ratio,
        });
        if let Some((t, r)) = self.truth_errors {
            v["tetError"] = json!(t);
            v["referenceError"] = json!(r);
            v["errorRatio"] = json!(if r > 0.0 { t / r } else { f64::NAN });
        }
        v
    }
}

pub struct Side<'a> {
    pub image: &'a [DVec3],
    pub std_error: Option<&'a [DVec3]>,
    pub stats: &'a RenderStats,
}

pub fn compare(tet: &Side, reference: &Side, truth: Option<&[DVec3]>) -> Result<CompareReport, String> {
    if (tet.stats.width, tet.stats.height) != (reference.stats.width, reference.stats.height)
        || tet.image.len() != reference.image.len()
    {
        return Err(format!(
            "image sizes differ: {}x{} vs {}x{}",
            tet.stats.width, tet.stats.height, reference.stats.width, reference.stats.height
        ));
    }
    if truth.is_some_and(|t| t.len() != tet.image.len()) {
        return Err("ground-truth image has a different size".into());
    }
    let outlier_fraction = match (tet.std_error, reference.std_error) {
        (Some(a), Some(b)) => Some(outlier_fraction(tet.image, a, reference.image, b, 3.0)),
        _ => None,
    };
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    Ok(CompareReport {
        rmse: rmse(tet.image, reference.image),
        outlier_fraction,
        speedup: ratio(reference.stats.seconds, tet.stats.seconds),
        cells_visited_ratio: ratio(reference.stats.cells_per_path(), tet.stats.cells_per_path()),
        cell_count_ratio: ratio(reference.stats.leaf_count as f64, tet.stats.leaf_count as f64),
        truth_errors: truth.map(|t| (rmse(tet.image, t), rmse(reference.image, t))),
    })
}
