//! CSV results and run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::config::{ConfigError, ExperimentConfig};
use crate::experiments::runner::AggregateCell;
use crate::rng::StreamKey;

pub const CSV_HEADER: [&str; 8] = ["policy", "T", "sweep_param", "sweep_value", "reps", "mean_regret", "std", "stderr"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad csv: {0}")]
    Format(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub policy: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub reps: usize,
    pub mean_regret: f64,
    pub std: f64,
    pub stderr: f64,
}

impl From<&AggregateCell> for CsvRow {
    fn from(c: &AggregateCell) -> Self {
        Self {
            policy: c.policy.name().to_string(),
            horizon: c.horizon,
            sweep_param: c.sweep_param.map_or("none", |p| p.name()).to_string(),
            sweep_value: c.sweep_value,
            reps: c.reps,
            mean_regret: c.mean_regret,
            std: c.std,
            stderr: c.stderr,
        }
    }
}

/// Render cells as CSV text. Floats use the shortest round-trip representation.
pub fn cells_to_csv(cells: &[AggregateCell]) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for c in cells {
        w.serialize(CsvRow::from(c))?;
    }
    w.into_inner().map_err(|e| OutputError::Format(e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    std::fs::write(path, bytes).map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

pub fn emit_csv(cells: &[AggregateCell], path: &Path) -> Result<(), OutputError> {
    write_file(path, &cells_to_csv(cells)?)
}

pub fn read_csv(bytes: &[u8]) -> Result<Vec<CsvRow>, OutputError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(OutputError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntry {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rep: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub software_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub git_rev: Option<String>,
    pub seeds: Vec<SeedEntry>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, git_rev: Option<String>) -> Self {
        let seeds = config
            .horizons
            .iter()
            .flat_map(|&t| {
                (0..config.reps).map(move |rep| SeedEntry {
                    horizon: t,
                    rep,
                    seed: StreamKey::new(config.master_seed, rep as u64, t as u64).seed(),
                })
            })
            .collect();
        Self {
            config: config.clone(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            git_rev,
            seeds,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, OutputError> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

pub fn emit_manifest(manifest: &Manifest, path: &Path) -> Result<(), OutputError> {
    write_file(path, &manifest.to_bytes()?)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, OutputError> {
    let m: Manifest = serde_json::from_slice(bytes)?;
    m.config.validate()?;
    Ok(m)
}

/// Accept either a bare config or a manifest wrapping one.
pub fn load_config_or_manifest(bytes: &[u8]) -> Result<ExperimentConfig, OutputError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    if value.get("software_version").is_some() {
        Ok(parse_manifest(bytes)?.config)
    } else {
        Ok(crate::experiments::config::parse_config(bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{NamedScale, ScaleRef};
    use crate::policy::PolicyKind;

    #[test]
    fn empty_cells_give_header_only() {
        let text = cells_to_csv(&[]).unwrap();
        assert_eq!(text, b"policy,T,sweep_param,sweep_value,reps,mean_regret,std,stderr\n");
        assert!(read_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn one_cell_round_trips() {
        let cell = AggregateCell::from_regrets(
            PolicyKind::Learning,
            200,
            None,
            None,
            vec![Some(1.5), Some(2.25), Some(0.1)],
            vec![],
            vec![],
        );
        let text = cells_to_csv(std::slice::from_ref(&cell)).unwrap();
        assert_eq!(text.iter().filter(|&&b| b == b'\n').count(), 2);
        let rows = read_csv(&text).unwrap();
        assert_eq!(rows, vec![CsvRow::from(&cell)]);
        assert_eq!(rows[0].mean_regret, cell.mean_regret);
    }

    #[test]
    fn manifest_round_trips_and_is_accepted_as_config() {
        let cfg = ExperimentConfig::new(ScaleRef::Named(NamedScale::Scale2), vec![10, 20], 2, 5, vec![PolicyKind::FullInfo]);
        let m = Manifest::new(&cfg, Some("abc".into()));
        assert_eq!(m.seeds.len(), 4);
        let bytes = m.to_bytes().unwrap();
        assert_eq!(parse_manifest(&bytes).unwrap(), m);
        assert_eq!(load_config_or_manifest(&bytes).unwrap(), cfg);
        assert_eq!(load_config_or_manifest(&serde_json::to_vec(&cfg).unwrap()).unwrap(), cfg);
    }
}
