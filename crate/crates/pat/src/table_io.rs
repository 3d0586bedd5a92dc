//! CSV tables, label masks, predictions and split/tag sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pat_core::corpus::{LabelMask, Partition, SplitAssignment, Table};
use pat_core::evalkit::ErrorKind;

use crate::error::{IoContext, PatError, Result};

fn reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).at(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file)))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).at(path)?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> PatError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PatError::io(path, io),
        kind => PatError::data(path, format!("{:?}", kind)),
    }
}

/// Header row plus records; every record must have the header's width.
pub fn parse_table<R: Read>(source: R, origin: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(origin, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Table::new(headers, rows).map_err(|e| PatError::data(origin, e.to_string()))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).at(path)?;
    parse_table(BufReader::new(file), path)
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(table.attributes()).map_err(|e| csv_err(path, e))?;
    for row in table.rows() {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "error" => Some(true),
        "0" | "false" | "clean" => Some(false),
        _ => None,
    }
}

/// A mask CSV has the table's header and one `0`/`1` per cell.
pub fn read_mask(path: &Path) -> Result<(Vec<String>, LabelMask)> {
    let table = read_table(path)?;
    let (attributes, rows) = table.into_parts();
    let cols = attributes.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            data.push(
                parse_flag(v)
                    .ok_or_else(|| PatError::data(path, format!("row {i}, column {j}: expected 0 or 1, got {v:?}")))?,
            );
        }
    }
    let mask = LabelMask::from_vec(rows.len(), cols, data)?;
    Ok((attributes, mask))
}

pub fn write_mask(path: &Path, attributes: &[String], mask: &LabelMask) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(attributes).map_err(|e| csv_err(path, e))?;
    for i in 0..mask.rows() {
        let rec: Vec<&str> = (0..mask.cols())
            .map(|j| if mask.get(i, j) { "1" } else { "0" })
            .collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

/// Loads a mask and checks it against `table`'s shape and header.
pub fn read_mask_for(path: &Path, table: &Table) -> Result<LabelMask> {
    let (attributes, mask) = read_mask(path)?;
    if attributes != table.attributes() || !mask.matches(table) {
        return Err(PatError::data(
            path,
            format!(
                "mask is {}x{} with header {:?}; table is {}x{} with header {:?}",
                mask.rows(),
                mask.cols(),
                attributes,
                table.n_rows(),
                table.n_cols(),
                table.attributes()
            ),
        ));
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub row: usize,
    pub col: usize,
    pub error: bool,
    pub confidence: f64,
}

pub const PREDICTION_HEADER: [&str; 4] = ["row", "col", "label", "confidence"];

pub fn write_predictions(path: &Path, preds: &[PredictionRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(PREDICTION_HEADER).map_err(|e| csv_err(path, e))?;
    for p in preds {
        let label = if p.error { "error" } else { "clean" };
        w.write_record([
            p.row.to_string(),
            p.col.to_string(),
            label.to_string(),
            format!("{:.6}", p.confidence),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(PatError::data(path, format!("expected header {PREDICTION_HEADER:?}")));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| PatError::data(path, format!("record {}: bad {what}", k + 1));
        out.push(PredictionRow {
            row: rec[0].trim().parse().map_err(|_| bad("row"))?,
            col: rec[1].trim().parse().map_err(|_| bad("col"))?,
            error: parse_flag(&rec[2]).ok_or_else(|| bad("label"))?,
            confidence: rec[3].trim().parse().map_err(|_| bad("confidence"))?,
        });
    }
    Ok(out)
}

/// Whether the first line of `path` is the predictions header.
pub fn is_predictions_file(path: &Path) -> Result<bool> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?;
    Ok(headers.iter().collect::<Vec<_>>() == PREDICTION_HEADER)
}

/// Dense mask from predictions; every cell must appear exactly once.
pub fn predictions_to_mask(path: &Path, preds: &[PredictionRow], rows: usize, cols: usize) -> Result<LabelMask> {
    let mut seen = vec![false; rows * cols];
    let mut mask = LabelMask::new(rows, cols);
    for p in preds {
        if p.row >= rows || p.col >= cols {
            return Err(PatError::data(
                path,
                format!("cell ({}, {}) outside {rows}x{cols}", p.row, p.col),
            ));
        }
        let k = p.row * cols + p.col;
        if seen[k] {
            return Err(PatError::data(
                path,
                format!("cell ({}, {}) listed twice", p.row, p.col),
            ));
        }
        seen[k] = true;
        mask.set(p.row, p.col, p.error);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(PatError::data(
            path,
            format!("cell ({}, {}) missing", k / cols, k % cols),
        ));
    }
    Ok(mask)
}

/// Shape implied by a predictions file: one past the largest indices.
pub fn predictions_shape(preds: &[PredictionRow]) -> (usize, usize) {
    preds
        .iter()
        .fold((0, 0), |(r, c), p| (r.max(p.row + 1), c.max(p.col + 1)))
}

pub fn write_split(path: &Path, split: &SplitAssignment, cols: usize) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col", "tag"]).map_err(|e| csv_err(path, e))?;
    for (k, tag) in split.tags().iter().enumerate() {
        w.write_record([(k / cols).to_string(), (k % cols).to_string(), tag.as_str().to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

/// Row-major tags from a split export; every cell must be covered.
pub fn read_split(path: &Path, rows: usize, cols: usize) -> Result<Vec<Partition>> {
    let mut rdr = reader(path)?;
    let mut tags = vec![None; rows * cols];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let (r, c): (usize, usize) = match (rec[0].trim().parse(), rec[1].trim().parse()) {
            (Ok(r), Ok(c)) if r < rows && c < cols => (r, c),
            _ => return Err(PatError::data(path, format!("bad cell {:?}", rec))),
        };
        let tag = Partition::parse(&rec[2]).ok_or_else(|| PatError::data(path, format!("bad tag {:?}", &rec[2])))?;
        tags[r * cols + c] = Some(tag);
    }
    let tags: Option<Vec<Partition>> = tags.into_iter().collect();
    tags.ok_or_else(|| PatError::data(path, "split does not cover every cell"))
}

/// Sidecar of injected error kinds: `row,col,kind` for every dirty cell.
pub fn write_tags(path: &Path, tags: &[Option<ErrorKind>], cols: usize) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col", "kind"]).map_err(|e| csv_err(path, e))?;
    for (k, t) in tags.iter().enumerate() {
        if let Some(kind) = t {
            w.write_record([
                (k / cols).to_string(),
                (k % cols).to_string(),
                kind.as_str().to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().at(path)
}

pub fn read_tags(path: &Path) -> Result<Vec<(usize, usize, ErrorKind)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parsed = (
            rec[0].trim().parse::<usize>(),
            rec[1].trim().parse::<usize>(),
            ErrorKind::parse(&rec[2]),
        );
        match parsed {
            (Ok(r), Ok(c), Some(k)) => out.push((r, c, k)),
            _ => return Err(PatError::data(path, format!("bad tag record {:?}", rec))),
        }
    }
    Ok(out)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let mut f = File::create(path).at(path)?;
    f.write_all(text.as_bytes()).at(path)
}
