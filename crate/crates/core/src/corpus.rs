//! Tables of string cells, ground-truth error masks and seeded splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A relational table: named attributes and rows of string cells.
///
/// No type inference is done; every cell is kept as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    attributes: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(attributes: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Table("a table needs at least one attribute".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &attributes {
            if !seen.insert(name.as_str()) {
                return Err(Error::Table(format!("duplicate attribute name `{name}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(Error::Table(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    attributes.len()
                )));
            }
        }
        Ok(Self { attributes, rows })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Cells in row-major order as `(row, col, text)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &str)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, cell)| (i, j, cell.as_str())))
    }

    pub fn same_shape(&self, other: &Table) -> bool {
        self.n_rows() == other.n_rows() && self.attributes == other.attributes
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<Vec<String>>) {
        (self.attributes, self.rows)
    }
}

/// Cell-level ground truth: `true` marks an erroneous cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl LabelMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![false; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "mask data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn for_table(table: &Table) -> Self {
        Self::new(table.n_rows(), table.n_cols())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count_errors(&self) -> usize {
        self.data.iter().filter(|&&e| e).count()
    }

    pub fn matches(&self, table: &Table) -> bool {
        self.rows == table.n_rows() && self.cols == table.n_cols()
    }
}

/// Marks every cell whose dirty text differs from the clean text.
pub fn derive_labels(dirty: &Table, clean: &Table) -> Result<LabelMask> {
    if !dirty.same_shape(clean) {
        return Err(Error::Shape(format!(
            "dirty table is {}x{}, clean table is {}x{} (attribute order must match too)",
            dirty.n_rows(),
            dirty.n_cols(),
            clean.n_rows(),
            clean.n_cols()
        )));
    }
    let data = dirty
        .rows()
        .iter()
        .zip(clean.rows())
        .flat_map(|(d, c)| d.iter().zip(c).map(|(a, b)| a != b))
        .collect();
    LabelMask::from_vec(dirty.n_rows(), dirty.n_cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Partition::Train),
            "val" => Some(Partition::Val),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Split(format!(
                "ratios must be finite and non-negative: {self:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    fn get(&self, p: Partition) -> f64 {
        match p {
            Partition::Train => self.train,
            Partition::Val => self.val,
            Partition::Test => self.test,
        }
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Per-cell partition tags, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub ratios: SplitRatios,
    tags: Vec<Partition>,
}

impl SplitAssignment {
    pub fn from_tags(rows: usize, cols: usize, seed: u64, ratios: SplitRatios, tags: Vec<Partition>) -> Result<Self> {
        if tags.len() != rows * cols {
            return Err(Error::Shape(format!(
                "split has {} tags, expected {}",
                tags.len(),
                rows * cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            seed,
            ratios,
            tags,
        })
    }

    pub fn tag(&self, row: usize, col: usize) -> Partition {
        self.tags[row * self.cols + col]
    }

    pub fn tags(&self) -> &[Partition] {
        &self.tags
    }

    /// Row-major `(row, col)` coordinates of every cell in `part`.
    pub fn cells(&self, part: Partition) -> Vec<(usize, usize)> {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == part)
            .map(|(k, _)| (k / self.cols, k % self.cols))
            .collect()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.tags.iter().filter(|&&t| t == part).count()
    }
}

/// Seeded split stratified on the error label.
///
/// Clean and erroneous cells are shuffled separately and each stratum is cut
/// at the cumulative ratio boundaries, so every partition inherits the
/// global error rate up to rounding.
pub fn split_cells(table: &Table, mask: &LabelMask, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if !mask.matches(table) {
        return Err(Error::Shape(format!(
            "mask is {}x{}, table is {}x{}",
            mask.rows(),
            mask.cols(),
            table.n_rows(),
            table.n_cols()
        )));
    }
    let n = table.n_cells();
    let mut tags = alloc::vec![Partition::Train; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut errors, mut clean): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| mask.as_slice()[k]);
    for stratum in [&mut clean, &mut errors] {
        stratum.shuffle(&mut rng);
        let len = stratum.len() as f64;
        let b1 = (libm::round(len * ratios.train) as usize).min(stratum.len());
        let b2 = (libm::round(len * (ratios.train + ratios.val)) as usize).clamp(b1, stratum.len());
        for (pos, &k) in stratum.iter().enumerate() {
            tags[k] = if pos < b1 {
                Partition::Train
            } else if pos < b2 {
                Partition::Val
            } else {
                Partition::Test
            };
        }
    }
    let split = SplitAssignment::from_tags(table.n_rows(), table.n_cols(), seed, ratios, tags)?;
    for part in Partition::ALL {
        if ratios.get(part) > 0.0 && split.count(part) == 0 {
            return Err(Error::Split(format!(
                "partition `{part}` would be empty with ratio {} over {n} cells",
                ratios.get(part)
            )));
        }
    }
    Ok(split)
}
