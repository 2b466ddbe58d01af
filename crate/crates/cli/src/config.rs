//! Flat `key = value` experiment configuration.
//!
//! Keys (hyphens and underscores are interchangeable): `grid`, `levels`,
//! `offset`, `k_sup`, `k`, `classifier`, `threshold_mult`, `root`,
//! `train_frac`, `seed`, `tol`, `max_iter`, `kmeans_max_iter`, `data`,
//! `out`. Blank lines and `#` comments are ignored. Command-line flags are
//! applied on top of the file with the same keys.

use std::path::PathBuf;

use blockbayes::bayesnet::{ClassifierKind, StructureOptions};
use blockbayes::features::{EmConfig, FeatureConfig};
use blockbayes::{BlockGrid, PipelineSettings};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub grid: BlockGrid,
    pub levels: usize,
    pub offset: (isize, isize),
    pub k_sup: usize,
    pub k_clusters: usize,
    pub classifier: ClassifierKind,
    pub threshold_multiplier: f64,
    pub root_override: Option<usize>,
    pub train_fraction: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub kmeans_max_iter: usize,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = PipelineSettings::default();
        Self {
            grid: s.grid,
            levels: s.features.levels,
            offset: s.features.offset,
            k_sup: s.features.k_sup,
            k_clusters: s.k_clusters,
            classifier: s.structure.kind,
            threshold_multiplier: s.structure.threshold_multiplier,
            root_override: s.structure.root_override,
            train_fraction: s.train_fraction,
            seed: s.seed,
            tol: s.features.em.tol,
            max_iter: s.features.em.max_iter,
            kmeans_max_iter: s.kmeans_max_iter,
            data_dir: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

/// Comma-separated list, e.g. `5,8,10,15`.
pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = value
        .split(',')
        .map(|item| parse(key, item))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("{key} needs at least one value")));
    }
    Ok(items)
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key.replace('-', "_").as_str() {
            "grid" => self.grid = value.parse().map_err(CliError::Usage)?,
            "levels" => self.levels = parse(key, value)?,
            "offset" => {
                let (dr, dc) = value
                    .split_once(',')
                    .ok_or_else(|| CliError::Usage(format!("offset must be DR,DC, got {value:?}")))?;
                self.offset = (parse(key, dr)?, parse(key, dc)?);
            }
            "k_sup" => self.k_sup = parse(key, value)?,
            "k" | "k_clusters" => self.k_clusters = parse(key, value)?,
            "classifier" => self.classifier = value.parse().map_err(CliError::Usage)?,
            "threshold_mult" | "threshold_multiplier" => self.threshold_multiplier = parse(key, value)?,
            "root" => {
                self.root_override = match value {
                    "" | "none" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "train_frac" | "train_fraction" => self.train_fraction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = parse(key, value)?,
            "data" | "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(CliError::Usage(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.levels < 2 {
            return bad(format!("levels must be >= 2, got {}", self.levels));
        }
        if self.offset == (0, 0) {
            return bad("offset must be nonzero".into());
        }
        if self.k_sup == 0 || self.max_iter == 0 || self.kmeans_max_iter == 0 {
            return bad("k_sup, max_iter and kmeans_max_iter must be positive".into());
        }
        if self.k_clusters < 2 {
            return bad(format!("k must be >= 2, got {}", self.k_clusters));
        }
        if !(self.threshold_multiplier.is_finite() && self.threshold_multiplier >= 0.0) {
            return bad(format!("threshold multiplier must be finite and >= 0, got {}", self.threshold_multiplier));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad(format!("tol must be finite and >= 0, got {}", self.tol));
        }
        if let Some(r) = self.root_override {
            if r >= self.grid.len() {
                return bad(format!("root {r} outside the {} block attributes", self.grid.len()));
            }
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            levels: self.levels,
            offset: self.offset,
            k_sup: self.k_sup,
            em: EmConfig {
                seed: self.seed,
                tol: self.tol,
                max_iter: self.max_iter,
            },
        }
    }

    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            grid: self.grid,
            features: self.features(),
            k_clusters: self.k_clusters,
            kmeans_max_iter: self.kmeans_max_iter,
            structure: StructureOptions {
                kind: self.classifier,
                threshold_multiplier: self.threshold_multiplier,
                root_override: self.root_override,
            },
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }
}
