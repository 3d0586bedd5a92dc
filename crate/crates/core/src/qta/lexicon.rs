use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{qta_tokenize, TokenizedCell};
use crate::corpus::Table;

/// Memoized tokenizations of a corpus at fixed `(D, N)`.
///
/// `cell_cache` maps cell text to its tokenization; `token_vocab` maps
/// every accepted token text to its `D`-wide embedding row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    d: usize,
    n: usize,
    token_vocab: BTreeMap<String, Vec<f32>>,
    cell_cache: BTreeMap<String, TokenizedCell>,
}

impl Lexicon {
    pub fn new(d: usize, n: usize) -> Self {
        Self {
            d: d.max(1),
            n: n.max(1),
            token_vocab: BTreeMap::new(),
            cell_cache: BTreeMap::new(),
        }
    }

    /// Tokenizes every distinct cell of `table` once.
    pub fn build(table: &Table, d: usize, n: usize) -> Self {
        let mut lex = Self::new(d, n);
        for (_, _, cell) in table.cells() {
            lex.get_or_insert(cell);
        }
        lex
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, cell: &str) -> Option<&TokenizedCell> {
        self.cell_cache.get(cell)
    }

    pub fn get_or_insert(&mut self, cell: &str) -> &TokenizedCell {
        if !self.cell_cache.contains_key(cell) {
            let tc = qta_tokenize(cell, self.d, self.n);
            self.insert(cell.into(), tc);
        }
        &self.cell_cache[cell]
    }

    /// Inserts a tokenization computed elsewhere. The caller guarantees it
    /// equals `qta_tokenize(cell, d, n)`.
    pub fn insert(&mut self, cell: String, tc: TokenizedCell) {
        for (k, t) in tc.tokens.iter().enumerate() {
            if !self.token_vocab.contains_key(&t.text) {
                self.token_vocab.insert(t.text.clone(), tc.embedding.row(k).to_vec());
            }
        }
        self.cell_cache.insert(cell, tc);
    }

    pub fn token_vector(&self, token: &str) -> Option<&[f32]> {
        self.token_vocab.get(token).map(Vec::as_slice)
    }

    pub fn vocab_len(&self) -> usize {
        self.token_vocab.len()
    }

    pub fn len(&self) -> usize {
        self.cell_cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_cache.is_empty()
    }

    /// Cached cells in lexicographic order of their text.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &TokenizedCell)> {
        self.cell_cache.iter().map(|(k, v)| (k.as_str(), v))
    }
}
