//! Resolving command-line flags into a structure, points and settings.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mixcurv::gallery::{load_entry, GalleryEntry, GalleryError};
use mixcurv::geometry::GeomError;
use mixcurv::structure::{parse_box, ProductStructure, StructureError};
use mixcurv::variations::VariationError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error("at {point:?}: {source}")]
    AtPoint { point: Vec<f64>, source: GeomError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags shared by every command that evaluates a structure.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Structure spec file.
    #[arg(long, conflicts_with = "gallery")]
    pub spec: Option<PathBuf>,
    /// Gallery entry name.
    #[arg(long)]
    pub gallery: Option<String>,
    /// Explicit points, e.g. "(0,0,0);(0.1,0.2,0.3)".
    #[arg(long, conflicts_with = "random")]
    pub points: Option<String>,
    /// Number of seeded random points in the box.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling and quadrature box, e.g. "[-1,1] x [-1,1] x [0,1]"; defaults to the domain.
    #[arg(long = "box")]
    pub bbox: Option<String>,
    /// Quadrature grid per axis (enables integral checks).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

pub const DEFAULT_POINTS: usize = 5;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceInfo {
    Gallery { name: String },
    Spec { path: String },
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PointMode {
    Explicit,
    Random { count: usize },
}

/// Everything that determines a report; echoed into it.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub source: SourceInfo,
    pub structure: String,
    pub spec_sha256: String,
    pub points: PointMode,
    pub seed: u64,
    #[serde(rename = "box")]
    pub bbox: Vec<(f64, f64)>,
    pub grid: Option<usize>,
    pub tol: f64,
}

pub struct Loaded {
    pub structure: ProductStructure,
    pub entry: Option<GalleryEntry>,
    pub config: RunConfig,
    pub points: Vec<Vec<f64>>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `"(a,b,c);(d,e,f)"`; parentheses are optional.
pub fn parse_points(text: &str, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let inner = part.trim_start_matches('(').trim_end_matches(')');
        let x = inner
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad coordinate `{}` in `{part}`", v.trim()))))
            .collect::<Result<Vec<_>, _>>()?;
        if x.len() != dim {
            return Err(CliError::Config(format!("point `{part}` has {} coordinates, expected {dim}", x.len())));
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(CliError::Config("no points given".into()));
    }
    Ok(out)
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub fn load(common: &Common, command: &str, default_tol: f64) -> Result<Loaded, CliError> {
    let (text, source, entry) = match (&common.spec, &common.gallery) {
        (Some(p), None) => (read(p)?, SourceInfo::Spec { path: p.display().to_string() }, None),
        (None, Some(name)) => {
            let e = load_entry(name)?;
            (e.spec.to_string(), SourceInfo::Gallery { name: name.clone() }, Some(e))
        }
        _ => return Err(CliError::Config("give exactly one of --spec or --gallery".into())),
    };
    let structure = ProductStructure::load(&text)?;
    let bbox = match &common.bbox {
        Some(b) => {
            let bx = parse_box(b, &structure.params)?;
            if bx.len() != structure.dim {
                return Err(CliError::Config(format!("box has {} intervals, expected {}", bx.len(), structure.dim)));
            }
            let inside = bx.iter().zip(&structure.domain).all(|((a, b), (lo, hi))| a >= lo && b <= hi);
            if !inside {
                return Err(CliError::Config("box must lie inside the domain".into()));
            }
            bx
        }
        None => structure.domain.clone(),
    };
    let (points, mode) = match &common.points {
        Some(p) => {
            let pts = parse_points(p, structure.dim)?;
            for x in &pts {
                structure.check_point(x)?;
            }
            (pts, PointMode::Explicit)
        }
        None => {
            let count = common.random.unwrap_or(DEFAULT_POINTS);
            if count == 0 {
                return Err(CliError::Config("--random needs at least one point".into()));
            }
            (structure.with_domain(bbox.clone()).sample_points(count, common.seed, 0.05), PointMode::Random { count })
        }
    };
    if common.grid.is_some_and(|g| g < 2) {
        return Err(CliError::Config("--grid needs at least 2 nodes per axis".into()));
    }
    let tol = common.tol.unwrap_or(default_tol);
    if !(tol > 0.0) {
        return Err(CliError::Config("--tol must be positive".into()));
    }
    let config = RunConfig {
        command: command.into(),
        source,
        structure: structure.name.clone(),
        spec_sha256: sha256_hex(&text),
        points: mode,
        seed: common.seed,
        bbox,
        grid: common.grid,
        tol,
    };
    Ok(Loaded { structure, entry, config, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse_with_and_without_parentheses() {
        let p = parse_points("(0, 0.5, -1); 1,2,3", 3).unwrap();
        assert_eq!(p, vec![vec![0.0, 0.5, -1.0], vec![1.0, 2.0, 3.0]]);
        assert!(parse_points("(0,0)", 3).is_err());
        assert!(parse_points("(0,a,0)", 3).is_err());
        assert!(parse_points(" ; ", 3).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
