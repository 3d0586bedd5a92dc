//! Heatmap files, training history, metrics and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pat_core::evalkit::Metrics;
use pat_core::explain::{render_pgm, render_svg, Relation, VisMap};
use pat_core::trainer::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::binfmt::sha256_hex;
use crate::config::KeyValues;
use crate::error::{IoContext, PatError, Result};
use crate::table_io::write_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Svg,
    Pgm,
    Json,
}

impl HeatmapFormat {
    pub const ALL: [HeatmapFormat; 3] = [Self::Svg, Self::Pgm, Self::Json];

    pub fn extension(self) -> &'static str {
        match self {
            Self::Svg => "svg",
            Self::Pgm => "pgm",
            Self::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.extension() == s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VisJson {
    eta: f64,
    relation: String,
    positions: Vec<usize>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn relation_str(r: Relation) -> &'static str {
    match r {
        Relation::Row => "row",
        Relation::Column => "column",
    }
}

pub fn parse_relation(s: &str) -> Option<Relation> {
    match s {
        "row" => Some(Relation::Row),
        "column" => Some(Relation::Column),
        _ => None,
    }
}

pub fn vis_to_json(vis: &VisMap) -> String {
    let j = VisJson {
        eta: vis.eta,
        relation: relation_str(vis.relation).into(),
        positions: vis.positions.clone(),
        labels: vis.labels.clone(),
        values: vis.values.clone(),
    };
    serde_json::to_string_pretty(&j).expect("plain data serializes")
}

pub fn vis_from_json(text: &str, origin: &Path) -> Result<VisMap> {
    let j: VisJson = serde_json::from_str(text).map_err(|e| PatError::data(origin, e.to_string()))?;
    let relation = parse_relation(&j.relation).ok_or_else(|| PatError::data(origin, "unknown relation"))?;
    let width = j.positions.len();
    if j.labels.len() != width || j.values.iter().any(|v| v.len() != width) {
        return Err(PatError::data(origin, "heatmap rows disagree in width"));
    }
    Ok(VisMap {
        eta: j.eta,
        relation,
        positions: j.positions,
        labels: j.labels,
        values: j.values,
    })
}

pub fn write_heatmap(path: &Path, vis: &VisMap, format: HeatmapFormat) -> Result<()> {
    match format {
        HeatmapFormat::Svg => write_text(path, &render_svg(vis)),
        HeatmapFormat::Json => write_text(path, &vis_to_json(vis)),
        HeatmapFormat::Pgm => std::fs::write(path, render_pgm(vis)).at(path),
    }
}

pub const HISTORY_HEADER: [&str; 6] = ["epoch", "loss", "val_precision", "val_recall", "val_f1", "lr"];

pub fn render_history(history: &[EpochRecord]) -> String {
    let mut s = HISTORY_HEADER.join(",");
    s.push('\n');
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.loss, r.precision, r.recall, r.f1, r.lr
        ));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsJson {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl From<&Metrics> for MetricsJson {
    fn from(m: &Metrics) -> Self {
        Self {
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            tn: m.tn,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy(),
        }
    }
}

pub fn metrics_text(m: &Metrics) -> String {
    format!(
        "precision {:.4}\nrecall    {:.4}\nf1        {:.4}\naccuracy  {:.4}\ntp {} fp {} fn {} tn {}\n",
        m.precision,
        m.recall,
        m.f1,
        m.accuracy(),
        m.tp,
        m.fp,
        m.fn_,
        m.tn
    )
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    /// Digest of a file, or of every file under a directory in name order.
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: digest_path(path)?,
        })
    }
}

fn digest_path(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return Ok(sha256_hex(&std::fs::read(path).at(path)?));
    }
    let mut names: Vec<PathBuf> = std::fs::read_dir(path)
        .at(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .at(path)?;
    names.sort();
    let mut joined = String::new();
    for p in names.iter().filter(|p| p.is_file()) {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        joined.push_str(&format!("{name} {}\n", digest_path(p)?));
    }
    Ok(sha256_hex(joined.as_bytes()))
}

/// Record of one CLI invocation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: &KeyValues) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            config: config
                .keys()
                .map(|k| (k.to_string(), config.get(k).unwrap_or("").to_string()))
                .collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        write_text(
            path,
            &serde_json::to_string_pretty(self).expect("plain data serializes"),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| PatError::data(path, e.to_string()))
    }
}
