//! Sectioned key-value job files.
//!
//! ```text
//! # comment
//! [camera]
//! position = 1.6 1.1 -1.4
//! target = 0.5 0.5 0.5
//! fov = 45
//!
//! [build]
//! threshold = 0.5
//!
//! [render]
//! spp = 64
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique per
//! section. Vectors are whitespace-separated numbers. Every key can also be set
//! on the command line as `--set section.key=value`, which wins over the file.

use std::collections::BTreeMap;
use std::path::Path;

use glam::DVec3;
use tetvol_core::{BuildConfig, PinholeCamera, RenderConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

const SECTIONS: [(&str, &[&str]); 3] = [
    ("camera", &["position", "target", "up", "fov", "width", "height"]),
    ("build", &["threshold", "max_level", "use_camera", "pixel_threshold", "density_scale"]),
    (
        "render",
        &[
            "spp",
            "max_bounces",
            "seed",
            "g",
            "albedo",
            "environment",
            "emission_scale",
            "exposure",
            "gamma",
            "threads",
        ],
    ),
];

/// Raw section/key/value table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JobConfig {
    values: BTreeMap<(String, String), String>,
}

fn check_key(section: &str, key: &str) -> Result<(), ConfigError> {
    let known = SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key));
    if known {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey { section: section.into(), key: key.into() })
    }
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| ConfigError::Syntax { line: i + 1, msg };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {line:?}")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let sec = section
                .clone()
                .ok_or_else(|| err("key outside of any section".into()))?;
            let key = key.trim().to_string();
            check_key(&sec, &key).map_err(|e| err(e.to_string()))?;
            if cfg.values.insert((sec, key.clone()), value.trim().to_string()).is_some() {
                return Err(err(format!("duplicate key {key}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Invalid(format!("override {assignment:?} is not section.key=value"));
        let (path, value) = assignment.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        check_key(section, key)?;
        self.values.insert((section.into(), key.into()), value.trim().into());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::Value {
                section: section.into(),
                key: key.into(),
                msg: format!("cannot parse {v:?}"),
            }),
        }
    }

    fn vec3(&self, section: &str, key: &str, default: DVec3) -> Result<DVec3, ConfigError> {
        let Some(v) = self.get(section, key) else {
            return Ok(default);
        };
        let err = || ConfigError::Value {
            section: section.into(),
            key: key.into(),
            msg: format!("expected three numbers, got {v:?}"),
        };
        let nums: Vec<f64> = v
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err())?;
        match nums[..] {
            [x, y, z] => Ok(DVec3::new(x, y, z)),
            _ => Err(err()),
        }
    }

    pub fn camera(&self) -> Result<PinholeCamera, ConfigError> {
        let position = self.vec3("camera", "position", DVec3::new(0.5, 0.5, -1.5))?;
        let target = self.vec3("camera", "target", DVec3::splat(0.5))?;
        let up = self.vec3("camera", "up", DVec3::Y)?;
        let fov = self.parsed("camera", "fov", 45.0)?;
        let width = self.parsed("camera", "width", 64u32)?;
        let height = self.parsed("camera", "height", 64u32)?;
        PinholeCamera::look_at(position, target, up, fov, width, height)
            .map_err(|e| ConfigError::Invalid(format!("[camera] {e}")))
    }

    pub fn build(&self) -> Result<BuildConfig, ConfigError> {
        let d = BuildConfig::default();
        let cfg = BuildConfig {
            variation_threshold: self.parsed("build", "threshold", d.variation_threshold)?,
            max_level: self.parsed("build", "max_level", d.max_level)?,
            use_camera: self.parsed("build", "use_camera", d.use_camera)?,
            pixel_threshold: self.parsed("build", "pixel_threshold", d.pixel_threshold)?,
            density_scale: self.parsed("build", "density_scale", d.density_scale)?,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn render(&self) -> Result<RenderConfig, ConfigError> {
        let d = RenderConfig::default();
        let threads = match self.get("render", "threads") {
            None => None,
            Some(_) => Some(self.parsed("render", "threads", 0usize)?),
        };
        let cfg = RenderConfig {
            spp: self.parsed("render", "spp", d.spp)?,
            max_bounces: self.parsed("render", "max_bounces", d.max_bounces)?,
            seed: self.parsed("render", "seed", d.seed)?,
            hg_g: self.parsed("render", "g", d.hg_g)?,
            default_albedo: self.parsed("render", "albedo", d.default_albedo)?,
            environment: self.vec3("render", "environment", d.environment())?.to_array(),
            emission_scale: self.parsed("render", "emission_scale", d.emission_scale)?,
            exposure: self.parsed("render", "exposure", d.exposure)?,
            gamma: self.parsed("render", "gamma", d.gamma)?,
            threads,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
