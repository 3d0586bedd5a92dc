//! Attention heatmaps: per-head CLS relation vectors of the last encoder
//! layer, scaled by `η` and trimmed to the real tokens of a cell.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::pat_net::AttentionTrace;
use crate::qta::TokenizedCell;

pub const DEFAULT_ETA: f64 = 5.0;

/// Which slice of the CLS attention is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relation {
    /// Row 0: how the CLS query distributes over all keys. Sums to 1.
    #[default]
    Row,
    /// Column 0: how much every query attends to CLS.
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Cls,
    Data,
    Pattern,
}

impl Slot {
    /// Kind of sequence position `p` in the interleaved layout.
    pub fn of_position(p: usize) -> Self {
        match p {
            0 => Self::Cls,
            p if p % 2 == 1 => Self::Data,
            _ => Self::Pattern,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisMap {
    pub eta: f64,
    pub relation: Relation,
    /// Untrimmed sequence positions that were kept, ascending.
    pub positions: Vec<usize>,
    pub labels: Vec<String>,
    /// `values[head][i]` is `η ·` attention at `positions[i]`.
    pub values: Vec<Vec<f64>>,
}

impl VisMap {
    pub fn heads(&self) -> usize {
        self.values.len()
    }

    pub fn width(&self) -> usize {
        self.positions.len()
    }

    pub fn slot(&self, i: usize) -> Slot {
        Slot::of_position(self.positions[i])
    }

    /// Attention mass per head after undoing `η`.
    pub fn unscaled_sums(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().sum::<f64>() / self.eta).collect()
    }
}

/// Label of every untrimmed position: `[CLS]`, token texts, `P1`, `P2`...
fn position_label(p: usize, cell: &TokenizedCell) -> String {
    match Slot::of_position(p) {
        Slot::Cls => "[CLS]".to_string(),
        Slot::Data => cell.tokens[(p - 1) / 2].text.clone(),
        Slot::Pattern => format!("P{}", p / 2),
    }
}

/// Last-layer CLS relation of each head. Keeps CLS and the data/pattern
/// pair of every real token; padding pairs are dropped.
pub fn extract_vis(trace: &AttentionTrace, cell: &TokenizedCell, eta: f64, relation: Relation) -> Result<VisMap> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    let n = cell.embedding.rows();
    if trace.seq != 1 + 2 * n {
        return Err(Error::Shape(format!(
            "trace has {} positions, cell with {n} token slots needs {}",
            trace.seq,
            1 + 2 * n
        )));
    }
    if trace.layers == 0 || trace.heads == 0 || trace.scores.len() != trace.layers * trace.heads * trace.seq * trace.seq
    {
        return Err(Error::Shape("incomplete attention trace".into()));
    }
    let kept = 1 + 2 * cell.token_count();
    let positions: Vec<usize> = (0..kept).collect();
    let last = trace.layers - 1;
    let values = (0..trace.heads)
        .map(|h| {
            positions
                .iter()
                .map(|&p| {
                    let a = match relation {
                        Relation::Row => trace.row(last, h, 0)[p],
                        Relation::Column => trace.row(last, h, p)[0],
                    };
                    f64::from(a) * eta
                })
                .collect()
        })
        .collect();
    Ok(VisMap {
        eta,
        relation,
        labels: positions.iter().map(|&p| position_label(p, cell)).collect(),
        positions,
        values,
    })
}

/// Grey level of a value: 255 is white (0), 0 is black (≥ 1).
pub fn shade(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (255.0 - libm::round(255.0 * v)) as u8
}

/// Binary greymap with one pixel per head and position.
pub fn render_pgm(vis: &VisMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", vis.width(), vis.heads()).into_bytes();
    for row in &vis.values {
        out.extend(row.iter().map(|&v| shade(v)));
    }
    out
}

const CELL: usize = 36;
const LABEL_H: usize = 48;
const MARGIN: usize = 56;

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

/// Base colour of a column; opacity carries the value.
fn hue(slot: Slot) -> &'static str {
    match slot {
        Slot::Cls => "#404040",
        Slot::Data => "#1f4e9c",
        Slot::Pattern => "#b8541a",
    }
}

/// Heads as rows, positions as columns. Data columns are blue, pattern
/// columns orange; opacity is `min(value, 1)`.
pub fn render_svg(vis: &VisMap) -> String {
    let (w, h) = (vis.width(), vis.heads());
    let width = MARGIN + w * CELL + 8;
    let height = LABEL_H + h * CELL + 8;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">"#
    );
    for (i, label) in vis.labels.iter().enumerate() {
        let x = MARGIN + i * CELL + CELL / 2;
        let weight = if vis.slot(i) == Slot::Data { "bold" } else { "normal" };
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="start" font-weight="{weight}" transform="rotate(-40 {x} {})">{}</text>"#,
            LABEL_H - 6,
            LABEL_H - 6,
            escape_xml(label)
        );
    }
    for (r, row) in vis.values.iter().enumerate() {
        let y = LABEL_H + r * CELL;
        let _ = writeln!(s, r#"<text x="4" y="{}">h{}</text>"#, y + CELL / 2 + 4, r + 1);
        for (i, &v) in row.iter().enumerate() {
            let x = MARGIN + i * CELL;
            let alpha = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" fill-opacity="{alpha:.4}" stroke="#dddddd"><title>{} {v:.4}</title></rect>"##,
                hue(vis.slot(i)),
                escape_xml(&vis.labels[i])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pat_net::{forward, init_params, PatConfig};
    use crate::qta::qta_tokenize;
    use alloc::vec;

    fn uniform_trace(layers: usize, heads: usize, n: usize) -> AttentionTrace {
        let seq = 1 + 2 * n;
        AttentionTrace {
            layers,
            heads,
            seq,
            scores: vec![1.0 / seq as f32; layers * heads * seq * seq],
        }
    }

    #[test]
    fn uniform_attention() {
        let cell = qta_tokenize("3621 N Western Ave", 8, 4);
        assert_eq!(cell.token_count(), 4);
        let vis = extract_vis(&uniform_trace(2, 3, 4), &cell, DEFAULT_ETA, Relation::Row).unwrap();
        assert_eq!(vis.heads(), 3);
        assert_eq!(vis.width(), 9);
        for row in &vis.values {
            for &v in row {
                assert!((v - 5.0 / 9.0).abs() < 1e-6);
            }
        }
        for s in vis.unscaled_sums() {
            assert!((s - 1.0).abs() < 1e-5);
        }
        let pgm = render_pgm(&vis);
        let body = &pgm[pgm.len() - 27..];
        assert!(body.iter().all(|&b| b == body[0]));
    }

    #[test]
    fn trims_padding() {
        let cell = qta_tokenize("ab 12", 6, 4);
        assert_eq!(cell.token_count(), 2);
        let vis = extract_vis(&uniform_trace(1, 2, 4), &cell, 1.0, Relation::Row).unwrap();
        assert_eq!(vis.positions, [0, 1, 2, 3, 4]);
        assert_eq!(vis.labels, ["[CLS]", "ab", "P1", "12", "P2"]);
        assert_eq!(
            (0..5).map(|i| vis.slot(i)).collect::<Vec<_>>(),
            [Slot::Cls, Slot::Data, Slot::Pattern, Slot::Data, Slot::Pattern]
        );
        for s in vis.unscaled_sums() {
            assert!(s <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn eight_heads_from_model() {
        let cfg = PatConfig {
            layers: 2,
            heads: 8,
            d_head: 4,
            d_mlp: 16,
            ..PatConfig::new(8, 3, 1)
        };
        let model = init_params(&cfg).unwrap();
        let cell = qta_tokenize("1xx19", 8, 3);
        let (_, trace) = forward(&model, &cell.embedding, 0, cell.token_count()).unwrap();
        let vis = extract_vis(&trace, &cell, DEFAULT_ETA, Relation::Row).unwrap();
        assert_eq!(vis.heads(), 8);
        assert_eq!(vis.width(), 1 + 2 * cell.token_count());
        for h in 0..8 {
            let full: f32 = trace.row(1, h, 0).iter().sum();
            assert!((full - 1.0).abs() < 1e-6);
            for (i, &p) in vis.positions.iter().enumerate() {
                assert_eq!(vis.values[h][i], f64::from(trace.row(1, h, 0)[p]) * DEFAULT_ETA);
            }
        }
        let col = extract_vis(&trace, &cell, DEFAULT_ETA, Relation::Column).unwrap();
        assert_eq!(col.values[0][2], f64::from(trace.row(1, 0, 2)[0]) * DEFAULT_ETA);
        assert_eq!(extract_vis(&trace, &cell, DEFAULT_ETA, Relation::Row).unwrap(), vis);
    }

    #[test]
    fn rejects_mismatch() {
        let cell = qta_tokenize("abc", 8, 3);
        assert!(extract_vis(&uniform_trace(1, 1, 4), &cell, 5.0, Relation::Row).is_err());
        assert!(extract_vis(&uniform_trace(1, 1, 3), &cell, 0.0, Relation::Row).is_err());
        let mut t = uniform_trace(1, 1, 3);
        t.scores.pop();
        assert!(extract_vis(&t, &cell, 5.0, Relation::Row).is_err());
    }

    #[test]
    fn pgm_layout() {
        let vis = VisMap {
            eta: 5.0,
            relation: Relation::Row,
            positions: vec![0, 1, 2],
            labels: vec!["[CLS]".into(), "a".into(), "P1".into()],
            values: vec![vec![0.0, 0.5, 2.0], vec![1.0, 0.25, f64::NAN]],
        };
        let pgm = render_pgm(&vis);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], [255, 127, 0, 0, 191, 255]);
    }

    #[test]
    fn svg_structure() {
        let cell = qta_tokenize("<a&b> \"x\"", 8, 4);
        let k = cell.token_count();
        let vis = extract_vis(&uniform_trace(1, 2, 4), &cell, 5.0, Relation::Row).unwrap();
        let svg = render_svg(&vis);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="cell""#).count(), 2 * (1 + 2 * k));
        assert!(svg.contains("#1f4e9c") && svg.contains("#b8541a"));
        assert!(!svg.contains("<a&b>"));
    }
}
