//! Detection metrics, seeded synthetic tables and error injection.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabelMask, Table};
use crate::error::{Error, Result};

/// Confusion counts with "error" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// Metrics over `(predicted, truth)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (p, t) in pairs {
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

pub fn compute_metrics(predicted: &LabelMask, truth: &LabelMask) -> Result<Metrics> {
    if (predicted.rows(), predicted.cols()) != (truth.rows(), truth.cols()) {
        return Err(Error::Shape(format!(
            "predictions are {}x{}, truth is {}x{}",
            predicted.rows(),
            predicted.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    Ok(Metrics::from_pairs(
        predicted
            .as_slice()
            .iter()
            .copied()
            .zip(truth.as_slice().iter().copied()),
    ))
}

const CITIES: &[&str] = &[
    "Chicago",
    "Springfield",
    "Capital City",
    "Riverside",
    "Fairview",
    "Madison",
    "Georgetown",
    "Arlington",
    "Salem",
    "Franklin",
    "Clinton",
    "Greenville",
    "Bristol",
    "Oakland",
    "Dayton",
    "Ashland",
    "Milton",
    "Newport",
    "Burlington",
    "Manchester",
];
const DIRECTIONS: &[&str] = &["N", "S", "E", "W"];
const STREETS: &[&str] = &[
    "Western",
    "Lincoln",
    "Oak",
    "Maple",
    "Washington",
    "Lake",
    "Hill",
    "Park",
    "Cedar",
    "Elm",
    "Pine",
    "Sunset",
    "Ridge",
    "Main",
    "Church",
    "Highland",
];
const SUFFIXES: &[&str] = &["Ave", "St", "Blvd", "Rd", "Dr", "Ln"];

/// Value generator for one synthetic attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum Grammar {
    /// Zero-padded decimal identifier of exactly `digits` digits.
    Id { digits: usize },
    /// Uniform choice from a fixed vocabulary.
    Categorical(Vec<String>),
    /// `"<number> <dir> <street> <suffix>"`, optionally with a city.
    Address,
    /// Decimal in `[lo, hi)` printed with `places` decimals.
    Decimal { lo: f64, hi: f64, places: usize },
}

impl Grammar {
    pub fn cities() -> Self {
        Grammar::Categorical(CITIES.iter().map(|s| s.to_string()).collect())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> String {
        match self {
            Grammar::Id { digits } => {
                let digits = (*digits).clamp(1, 18);
                let hi = 10u64.pow(digits as u32);
                format!("{:0digits$}", rng.random_range(hi / 10..hi))
            }
            Grammar::Categorical(pool) => pool.choose(rng).cloned().unwrap_or_default(),
            Grammar::Address => {
                let mut s = format!(
                    "{} {} {} {}",
                    rng.random_range(1..10000),
                    DIRECTIONS.choose(rng).unwrap(),
                    STREETS.choose(rng).unwrap(),
                    SUFFIXES.choose(rng).unwrap()
                );
                if rng.random_bool(0.5) {
                    s.push_str(", ");
                    s.push_str(CITIES.choose(rng).unwrap());
                }
                s
            }
            Grammar::Decimal { lo, hi, places } => {
                let v = rng.random_range(*lo..*hi);
                format!("{v:.places$}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub grammar: Grammar,
}

impl AttributeSpec {
    pub fn new(name: &str, grammar: Grammar) -> Self {
        Self {
            name: name.to_string(),
            grammar,
        }
    }
}

/// ID, city name, street address and a score in `[0, 1)`.
pub fn default_schema() -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::new("id", Grammar::Id { digits: 5 }),
        AttributeSpec::new("name", Grammar::cities()),
        AttributeSpec::new("address", Grammar::Address),
        AttributeSpec::new(
            "score",
            Grammar::Decimal {
                lo: 0.0,
                hi: 1.0,
                places: 2,
            },
        ),
    ]
}

/// A clean table of `n_rows` rows drawn from `schema`.
pub fn gen_synthetic(n_rows: usize, schema: &[AttributeSpec], seed: u64) -> Result<Table> {
    if n_rows == 0 {
        return Err(Error::Empty("synthetic table needs at least one row"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_rows)
        .map(|_| schema.iter().map(|a| a.grammar.sample(&mut rng)).collect())
        .collect();
    Table::new(schema.iter().map(|a| a.name.clone()).collect(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    /// Missing value.
    Mv,
    /// Typo.
    Tp,
    /// Outlier.
    Ot,
    /// Formatting violation.
    Fv,
    /// Attribute-domain violation.
    Ad,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 5] = [
        ErrorKind::Mv,
        ErrorKind::Tp,
        ErrorKind::Ot,
        ErrorKind::Fv,
        ErrorKind::Ad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Mv => "MV",
            ErrorKind::Tp => "TP",
            ErrorKind::Ot => "OT",
            ErrorKind::Fv => "FV",
            ErrorKind::Ad => "AD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-attribute error mix, a global cell rate and a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub rate: f64,
    pub seed: u64,
    /// `mix[j]` lists `(kind, weight)` for attribute `j`; weights sum to 1.
    pub mix: Vec<Vec<(ErrorKind, f64)>>,
}

impl InjectionSpec {
    /// Equal weights over `kinds`, dropping OT on non-numeric attributes
    /// and AD on single-attribute tables.
    pub fn uniform(table: &Table, kinds: &[ErrorKind], rate: f64, seed: u64) -> Result<Self> {
        let mix = (0..table.n_cols())
            .map(|j| {
                let ok: Vec<ErrorKind> = kinds
                    .iter()
                    .copied()
                    .filter(|&k| k != ErrorKind::Ot || is_numeric_attribute(table, j))
                    .filter(|&k| k != ErrorKind::Ad || table.n_cols() >= 2)
                    .collect();
                if ok.is_empty() {
                    return Err(Error::Injection {
                        kind: "any",
                        attribute: table.attributes()[j].clone(),
                        reason: "no requested error type applies",
                    });
                }
                let w = 1.0 / ok.len() as f64;
                Ok(ok.into_iter().map(|k| (k, w)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { rate, seed, mix })
    }

    pub fn validate(&self, table: &Table) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!("injection rate {} outside [0, 1]", self.rate)));
        }
        if self.mix.len() != table.n_cols() {
            return Err(Error::Config(format!(
                "{} error mixes for {} attributes",
                self.mix.len(),
                table.n_cols()
            )));
        }
        for (j, mix) in self.mix.iter().enumerate() {
            let attribute = || table.attributes()[j].clone();
            let total: f64 = mix.iter().map(|(_, w)| w).sum();
            if mix.iter().any(|(_, w)| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "error mix of `{}` must be non-negative and sum to 1",
                    attribute()
                )));
            }
            for &(kind, w) in mix {
                if w == 0.0 {
                    continue;
                }
                if kind == ErrorKind::Ot && !is_numeric_attribute(table, j) {
                    return Err(Error::Injection {
                        kind: "OT",
                        attribute: attribute(),
                        reason: "attribute is not numeric",
                    });
                }
                if kind == ErrorKind::Ad && table.n_cols() < 2 {
                    return Err(Error::Injection {
                        kind: "AD",
                        attribute: attribute(),
                        reason: "needs at least two attributes",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Every non-empty value parses as a number, and there is at least one.
pub fn is_numeric_attribute(table: &Table, col: usize) -> bool {
    let mut any = false;
    for row in table.rows() {
        let v = row[col].trim();
        if v.is_empty() {
            continue;
        }
        if v.parse::<f64>().is_err() {
            return false;
        }
        any = true;
    }
    any
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub dirty: Table,
    pub mask: LabelMask,
    /// Row-major error type of each cell, `None` when clean.
    pub tags: Vec<Option<ErrorKind>>,
}

/// Attempts per cell before a cell is left clean because no draw changed it.
const MAX_ATTEMPTS: usize = 16;

/// Corrupts a Bernoulli(`rate`) sample of cells. The mask is true exactly
/// where the dirty value differs from the clean one.
pub fn inject_errors(clean: &Table, spec: &InjectionSpec) -> Result<Injected> {
    spec.validate(clean)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_rows, n_cols) = (clean.n_rows(), clean.n_cols());
    let mut rows: Vec<Vec<String>> = clean.rows().to_vec();
    let mut mask = LabelMask::for_table(clean);
    let mut tags = vec![None; n_rows * n_cols];
    for i in 0..n_rows {
        for j in 0..n_cols {
            if !rng.random_bool(spec.rate) {
                continue;
            }
            let original = clean.cell(i, j);
            for _ in 0..MAX_ATTEMPTS {
                let kind = pick_kind(&spec.mix[j], &mut rng);
                let value = corrupt(kind, original, clean, j, &mut rng);
                if value != original {
                    rows[i][j] = value;
                    mask.set(i, j, true);
                    tags[i * n_cols + j] = Some(kind);
                    break;
                }
            }
        }
    }
    let dirty = Table::new(clean.attributes().to_vec(), rows)?;
    Ok(Injected { dirty, mask, tags })
}

fn pick_kind(mix: &[(ErrorKind, f64)], rng: &mut ChaCha8Rng) -> ErrorKind {
    let mut u: f64 = rng.random();
    for &(k, w) in mix {
        if u < w {
            return k;
        }
        u -= w;
    }
    mix.iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map_or(ErrorKind::Mv, |(k, _)| *k)
}

/// One corrupted version of `value`; may equal `value` when the kind has
/// no effect on it.
pub fn corrupt(kind: ErrorKind, value: &str, table: &Table, col: usize, rng: &mut ChaCha8Rng) -> String {
    match kind {
        ErrorKind::Mv => String::new(),
        ErrorKind::Tp => typo(value, rng),
        ErrorKind::Ot => outlier(value, rng),
        ErrorKind::Fv => format_violation(value, rng),
        ErrorKind::Ad => {
            if table.n_cols() < 2 || table.n_rows() == 0 {
                return value.to_string();
            }
            let mut other = rng.random_range(0..table.n_cols() - 1);
            if other >= col {
                other += 1;
            }
            let row = rng.random_range(0..table.n_rows());
            table.cell(row, other).to_string()
        }
    }
}

/// One character inserted, substituted or deleted; never returns the input.
fn typo(value: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = value.chars().collect();
    loop {
        let letter = char::from(b'a' + rng.random_range(0..26u8));
        let mut out = chars.clone();
        match (rng.random_range(0..3), chars.len()) {
            (_, 0) | (0, _) => out.insert(rng.random_range(0..=chars.len()), letter),
            (1, n) => out[rng.random_range(0..n)] = letter,
            (_, 1) => out.insert(rng.random_range(0..=1), letter),
            (_, n) => {
                out.remove(rng.random_range(0..n));
            }
        }
        let s: String = out.into_iter().collect();
        if s != value {
            return s;
        }
    }
}

/// Scientific notation of the value, or the value scaled far out of range.
fn outlier(value: &str, rng: &mut ChaCha8Rng) -> String {
    let Ok(v) = value.trim().parse::<f64>() else {
        return value.to_string();
    };
    let places = value.split_once('.').map_or(0, |(_, f)| f.len());
    if rng.random_bool(0.5) {
        format!("{v:e}")
    } else {
        let factor = [100.0, 1000.0, -100.0][rng.random_range(0..3)];
        format!("{:.places$}", v * factor + factor.signum())
    }
}

/// Case or punctuation mangling.
fn format_violation(value: &str, rng: &mut ChaCha8Rng) -> String {
    let candidates = [
        value.to_uppercase(),
        value.to_lowercase(),
        value.replace(' ', "_"),
        value.chars().filter(|c| c.is_alphanumeric()).collect(),
        value.replace('.', ","),
        format!("{value}."),
        format!("-{value}-"),
    ];
    let changed: Vec<&String> = candidates.iter().filter(|c| c.as_str() != value).collect();
    changed.choose(rng).map_or_else(|| value.to_string(), |s| (*s).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn metric_formulas() {
        let m = Metrics::from_counts(3, 1, 2, 10);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.total(), 16);

        let none = Metrics::from_counts(0, 0, 4, 6);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_mask() {
        let t = LabelMask::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        let m = compute_metrics(&t, &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert!(compute_metrics(&t, &LabelMask::new(1, 2)).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        let a = gen_synthetic(50, &default_schema(), 9).unwrap();
        assert_eq!(a, gen_synthetic(50, &default_schema(), 9).unwrap());
        assert_ne!(a, gen_synthetic(50, &default_schema(), 10).unwrap());
        assert!(gen_synthetic(0, &default_schema(), 9).is_err());
    }

    #[test]
    fn synthetic_shapes() {
        let t = gen_synthetic(500, &default_schema(), 2).unwrap();
        assert!(t
            .rows()
            .iter()
            .all(|r| r[0].len() == 5 && r[0].bytes().all(|b| b.is_ascii_digit())));
        let mean = |j: usize| t.rows().iter().map(|r| r[j].chars().count()).sum::<usize>() as f64 / 500.0;
        assert!(mean(2) > 3.0 * mean(0), "address {} vs id {}", mean(2), mean(0));
        assert!(is_numeric_attribute(&t, 0));
        assert!(!is_numeric_attribute(&t, 1));
        assert!(is_numeric_attribute(&t, 3));
    }

    #[test]
    fn single_corruptions() {
        let t = gen_synthetic(10, &default_schema(), 0).unwrap();
        assert_eq!(corrupt(ErrorKind::Mv, "abc", &t, 1, &mut rng()), "");
        let mut r = rng();
        for _ in 0..200 {
            assert_ne!(corrupt(ErrorKind::Tp, "10019", &t, 0, &mut r), "10019");
            assert_ne!(corrupt(ErrorKind::Tp, "", &t, 0, &mut r), "");
            assert_ne!(corrupt(ErrorKind::Fv, "Chicago", &t, 1, &mut r), "Chicago");
            assert_ne!(corrupt(ErrorKind::Ot, "0.06", &t, 3, &mut r), "0.06");
        }
        assert_eq!(format!("{:e}", 0.06f64), "6e-2");
        let ad = corrupt(ErrorKind::Ad, "Chicago", &t, 1, &mut rng());
        assert!(t.rows().iter().any(|row| row[0] == ad || row[2] == ad || row[3] == ad));
    }

    #[test]
    fn mask_is_exact() {
        let clean = gen_synthetic(300, &default_schema(), 4).unwrap();
        let spec = InjectionSpec::uniform(&clean, &ErrorKind::ALL, 0.3, 5).unwrap();
        let inj = inject_errors(&clean, &spec).unwrap();
        for (i, j, v) in inj.dirty.cells() {
            let changed = v != clean.cell(i, j);
            assert_eq!(changed, inj.mask.get(i, j));
            assert_eq!(changed, inj.tags[i * clean.n_cols() + j].is_some());
        }
        for (k, tag) in inj.tags.iter().enumerate() {
            if *tag == Some(ErrorKind::Ot) {
                assert!(k % 4 == 0 || k % 4 == 3);
            }
        }
        assert_eq!(inject_errors(&clean, &spec).unwrap(), inj);
    }

    #[test]
    fn realized_rate() {
        let clean = gen_synthetic(2500, &default_schema(), 0).unwrap();
        let spec = InjectionSpec::uniform(&clean, &[ErrorKind::Mv, ErrorKind::Tp], 0.1, 3).unwrap();
        let n = inject_errors(&clean, &spec).unwrap().mask.count_errors();
        assert!((900..=1100).contains(&n), "{n}");
    }

    #[test]
    fn rejects_bad_specs() {
        let clean = gen_synthetic(20, &default_schema(), 0).unwrap();
        let mut spec = InjectionSpec::uniform(&clean, &[ErrorKind::Mv], 0.1, 0).unwrap();
        spec.mix[1] = vec![(ErrorKind::Ot, 1.0)];
        assert!(matches!(
            inject_errors(&clean, &spec),
            Err(Error::Injection { kind: "OT", .. })
        ));
        spec.mix[1] = vec![(ErrorKind::Mv, 0.5)];
        assert!(inject_errors(&clean, &spec).is_err());
        spec.mix[1] = vec![(ErrorKind::Mv, 1.0)];
        spec.rate = 1.5;
        assert!(inject_errors(&clean, &spec).is_err());

        let one = Table::new(vec!["a".into()], vec![vec!["x".into()]]).unwrap();
        let ad = InjectionSpec {
            rate: 0.5,
            seed: 0,
            mix: vec![vec![(ErrorKind::Ad, 1.0)]],
        };
        assert!(inject_errors(&one, &ad).is_err());
    }

    #[test]
    fn kind_names() {
        for k in ErrorKind::ALL {
            assert_eq!(ErrorKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(ErrorKind::parse("ot"), Some(ErrorKind::Ot));
        assert_eq!(ErrorKind::parse("xx"), None);
    }
}
