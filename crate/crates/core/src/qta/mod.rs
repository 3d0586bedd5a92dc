//! Quasi-token arrangement: a backtracking tokenizer that fits any cell
//! into at most `N` tokens of at most `D` characters.
//!
//! The tokenizer walks a fixed tree of strategies, from fine to coarse,
//! and accepts the first arrangement that fits:
//!
//! | type | strategy |
//! |------|----------|
//! | 1 | full quasi-tokens (digit / punct / word runs), long runs chunked |
//! | 2 | type 1 plus punctuation merged into neighbouring words |
//! | 3 | digit-split segments, split again at whitespace, chunked, non-numbers merged |
//! | 4 | digit-split segments chunked as-is |
//! | 5 | whitespace-split chunks merged freely |
//! | 6 | type 5 truncated to the first `N` tokens |
//!
//! Merging always covers the source span between the two tokens, so the
//! accepted tokens plus the skipped whitespace reproduce the cell.

mod charclass;
mod lexicon;

pub use charclass::{char_class, CharClass};
pub use lexicon::Lexicon;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenClass {
    Word,
    Number,
    Punct,
    Mixed,
}

impl TokenClass {
    pub fn code(self) -> u8 {
        match self {
            TokenClass::Word => 0,
            TokenClass::Number => 1,
            TokenClass::Punct => 2,
            TokenClass::Mixed => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => TokenClass::Word,
            1 => TokenClass::Number,
            2 => TokenClass::Punct,
            3 => TokenClass::Mixed,
            _ => return None,
        })
    }

    /// Classifies a span by its characters.
    pub fn of_text(text: &str) -> Self {
        let mut digit = true;
        let mut punct = true;
        let mut word = true;
        for c in text.chars() {
            let cls = char_class(c);
            digit &= cls == CharClass::Digit;
            punct &= cls == CharClass::Punct;
            word &= cls == CharClass::Word;
        }
        if digit {
            TokenClass::Number
        } else if punct {
            TokenClass::Punct
        } else if word {
            TokenClass::Word
        } else {
            TokenClass::Mixed
        }
    }

    fn word_like(self) -> bool {
        matches!(self, TokenClass::Word | TokenClass::Mixed)
    }
}

/// A token as a byte range of its source cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub class: TokenClass,
    /// Length in characters.
    pub length: usize,
}

impl TokenSpan {
    pub fn new(cell: &str, start: usize, end: usize, class: TokenClass) -> Self {
        let text = cell[start..end].to_string();
        let length = text.chars().count();
        Self {
            start,
            end,
            text,
            class,
            length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuasiMode {
    /// Maximal runs of one character class, whitespace dropped.
    Full,
    /// Split only at digit / non-digit boundaries.
    Rough,
    /// Split only at whitespace.
    Mass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    /// Merge punctuation tokens into an adjacent word token.
    PunctIntoWord,
    /// Merge any adjacent pair that does not involve a number.
    NumIndependent,
    /// Merge any adjacent pair.
    Free,
}

/// Branch of the backtracking tree that produced a tokenization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AcceptType {
    Full = 1,
    PunctMerged = 2,
    RoughMerged = 3,
    RoughPartitioned = 4,
    Mass = 5,
    Truncated = 6,
}

impl AcceptType {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => AcceptType::Full,
            2 => AcceptType::PunctMerged,
            3 => AcceptType::RoughMerged,
            4 => AcceptType::RoughPartitioned,
            5 => AcceptType::Mass,
            6 => AcceptType::Truncated,
            _ => return None,
        })
    }
}

impl fmt::Display for AcceptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Accepted tokens of one cell and their `N×D` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCell {
    pub tokens: Vec<TokenSpan>,
    pub accept_type: AcceptType,
    pub embedding: Tensor2<f32>,
    pub truncated: bool,
}

impl TokenizedCell {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// Splits a cell into quasi-tokens.
pub fn quasi_tokenize(cell: &str, mode: QuasiMode) -> Vec<TokenSpan> {
    match mode {
        QuasiMode::Full => full_runs(cell),
        QuasiMode::Rough => rough_segments(cell),
        QuasiMode::Mass => whitespace_split(cell, 0, cell.len(), None),
    }
}

fn full_runs(cell: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut run: Option<(usize, CharClass)> = None;
    for (i, c) in cell.char_indices() {
        let cls = char_class(c);
        match run {
            Some((_, cur)) if cur == cls => {}
            _ => {
                if let Some((start, cur)) = run.take() {
                    push_run(&mut out, cell, start, i, cur);
                }
                run = Some((i, cls));
            }
        }
    }
    if let Some((start, cur)) = run {
        push_run(&mut out, cell, start, cell.len(), cur);
    }
    out
}

fn push_run(out: &mut Vec<TokenSpan>, cell: &str, start: usize, end: usize, cls: CharClass) {
    let class = match cls {
        CharClass::Space => return,
        CharClass::Digit => TokenClass::Number,
        CharClass::Punct => TokenClass::Punct,
        CharClass::Word => TokenClass::Word,
    };
    out.push(TokenSpan::new(cell, start, end, class));
}

/// Digit runs become number spans; everything between them becomes a
/// mixed span with its edge whitespace trimmed.
fn rough_segments(cell: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut digit_run: Option<bool> = None;
    let flush = |out: &mut Vec<TokenSpan>, s: usize, e: usize, digits: bool| {
        if digits {
            out.push(TokenSpan::new(cell, s, e, TokenClass::Number));
        } else {
            let seg = &cell[s..e];
            let lead = seg.len() - seg.trim_start().len();
            let trail = seg.len() - seg.trim_end().len();
            if lead + trail < seg.len() {
                out.push(TokenSpan::new(cell, s + lead, e - trail, TokenClass::Mixed));
            }
        }
    };
    for (i, c) in cell.char_indices() {
        let d = charclass::is_digit(c);
        match digit_run {
            Some(cur) if cur == d => {}
            Some(cur) => {
                flush(&mut out, start, i, cur);
                start = i;
                digit_run = Some(d);
            }
            None => digit_run = Some(d),
        }
    }
    if let Some(cur) = digit_run {
        flush(&mut out, start, cell.len(), cur);
    }
    out
}

/// Whitespace-separated pieces of `cell[from..to]`. `class` forces the
/// class of every piece; `None` classifies each piece by its text.
fn whitespace_split(cell: &str, from: usize, to: usize, class: Option<TokenClass>) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let emit = |out: &mut Vec<TokenSpan>, s: usize, e: usize| {
        let cls = class.unwrap_or_else(|| TokenClass::of_text(&cell[s..e]));
        out.push(TokenSpan::new(cell, s, e, cls));
    };
    for (off, c) in cell[from..to].char_indices() {
        let i = from + off;
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                emit(&mut out, s, i);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        emit(&mut out, s, to);
    }
    out
}

/// Chunks every span longer than `d` characters into consecutive pieces of
/// `d` characters (the last may be shorter), keeping order and class.
///
/// Chunks of a mixed span are reclassified, so an all-digit chunk is
/// always a number.
pub fn out_dim_partition(cell: &str, tokens: Vec<TokenSpan>, d: usize) -> Vec<TokenSpan> {
    let d = d.max(1);
    let mut out = Vec::with_capacity(tokens.len());
    let chunk = |s: usize, e: usize, class: TokenClass| match class {
        TokenClass::Mixed => TokenSpan::new(cell, s, e, TokenClass::of_text(&cell[s..e])),
        _ => TokenSpan::new(cell, s, e, class),
    };
    for t in tokens {
        if t.length <= d {
            out.push(t);
            continue;
        }
        let mut chunk_start = t.start;
        let mut n = 0;
        for (off, _) in cell[t.start..t.end].char_indices() {
            if n == d {
                out.push(chunk(chunk_start, t.start + off, t.class));
                chunk_start = t.start + off;
                n = 0;
            }
            n += 1;
        }
        out.push(chunk(chunk_start, t.end, t.class));
    }
    out
}

/// The span covering `a`, `b` and the source characters between them, if
/// it is at most `d` characters long.
fn cover(cell: &str, a: &TokenSpan, b: &TokenSpan, d: usize) -> Option<TokenSpan> {
    let gap = cell[a.end..b.start].chars().count();
    let length = a.length + gap + b.length;
    if length > d {
        return None;
    }
    let text = cell[a.start..b.end].to_string();
    Some(TokenSpan {
        start: a.start,
        end: b.end,
        class: TokenClass::of_text(&text),
        text,
        length,
    })
}

/// Merges adjacent tokens under `policy` until at most `n` remain or no
/// legal merge is left. A merge is legal only if the covering span has at
/// most `d` characters. The result may still hold more than `n` tokens.
pub fn merge_tokens(cell: &str, tokens: Vec<TokenSpan>, d: usize, n: usize, policy: MergePolicy) -> Vec<TokenSpan> {
    if tokens.len() <= n {
        return tokens;
    }
    match policy {
        MergePolicy::PunctIntoWord => merge_punct(cell, tokens, d, n),
        MergePolicy::NumIndependent => merge_greedy(cell, tokens, d, n, true),
        MergePolicy::Free => merge_greedy(cell, tokens, d, n, false),
    }
}

fn merge_greedy(cell: &str, tokens: Vec<TokenSpan>, d: usize, n: usize, keep_numbers: bool) -> Vec<TokenSpan> {
    let mut remaining = tokens.len();
    let mut out: Vec<TokenSpan> = Vec::with_capacity(tokens.len());
    for t in tokens {
        if remaining > n {
            if let Some(last) = out.last_mut() {
                let allowed = !keep_numbers || (last.class != TokenClass::Number && t.class != TokenClass::Number);
                if allowed {
                    if let Some(merged) = cover(cell, last, &t, d) {
                        *last = merged;
                        remaining -= 1;
                        continue;
                    }
                }
            }
        }
        out.push(t);
    }
    out
}

/// Left to right, each punctuation token joins its preceding word-like
/// token, or failing that its following one, until `n` is reached.
fn merge_punct(cell: &str, tokens: Vec<TokenSpan>, d: usize, n: usize) -> Vec<TokenSpan> {
    let mut remaining = tokens.len();
    let mut out: Vec<TokenSpan> = Vec::with_capacity(tokens.len());
    let mut iter = tokens.into_iter().peekable();
    while let Some(t) = iter.next() {
        if remaining > n && t.class == TokenClass::Punct {
            if let Some(last) = out.last_mut() {
                if last.class.word_like() {
                    if let Some(merged) = cover(cell, last, &t, d) {
                        *last = merged;
                        remaining -= 1;
                        continue;
                    }
                }
            }
            if let Some(next) = iter.peek() {
                if next.class.word_like() {
                    if let Some(merged) = cover(cell, &t, next, d) {
                        iter.next();
                        out.push(merged);
                        remaining -= 1;
                        continue;
                    }
                }
            }
        }
        out.push(t);
    }
    out
}

/// Scaled code points, one token per row, zero padded to `n×d`.
///
/// Code points at or above 65536 are clamped to 65535 so every value lies
/// in `[0, 1)`.
pub fn embed_tokens(tokens: &[TokenSpan], d: usize, n: usize) -> Result<Tensor2<f32>> {
    if tokens.len() > n {
        return Err(Error::Shape(format!("{} tokens exceed N = {n}", tokens.len())));
    }
    let mut e = Tensor2::zeros(n, d);
    for (k, t) in tokens.iter().enumerate() {
        if t.length > d {
            return Err(Error::Shape(format!(
                "token `{}` has {} characters, D = {d}",
                t.text, t.length
            )));
        }
        for (slot, c) in e.row_mut(k).iter_mut().zip(t.text.chars()) {
            *slot = code_point_value(c);
        }
    }
    Ok(e)
}

#[inline]
pub fn code_point_value(c: char) -> f32 {
    (c as u32).min(65535) as f32 / 65536.0
}

/// Runs the full backtracking tree on one cell.
pub fn qta_tokenize(cell: &str, d: usize, n: usize) -> TokenizedCell {
    let (d, n) = (d.max(1), n.max(1));
    let (tokens, accept_type) = arrange(cell, d, n);
    let embedding = embed_tokens(&tokens, d, n).expect("arranged tokens fit D and N");
    TokenizedCell {
        truncated: accept_type == AcceptType::Truncated,
        tokens,
        accept_type,
        embedding,
    }
}

fn arrange(cell: &str, d: usize, n: usize) -> (Vec<TokenSpan>, AcceptType) {
    let full = out_dim_partition(cell, quasi_tokenize(cell, QuasiMode::Full), d);
    if full.len() <= n {
        return (full, AcceptType::Full);
    }
    let n_punct = full.iter().filter(|t| t.class == TokenClass::Punct).count();
    if full.len() - n <= n_punct {
        let merged = merge_tokens(cell, full, d, n, MergePolicy::PunctIntoWord);
        if merged.len() <= n {
            return (merged, AcceptType::PunctMerged);
        }
    }

    let rough = quasi_tokenize(cell, QuasiMode::Rough);
    let split: Vec<TokenSpan> = rough
        .iter()
        .flat_map(|seg| match seg.class {
            TokenClass::Number => alloc::vec![seg.clone()],
            _ => whitespace_split(cell, seg.start, seg.end, Some(seg.class)),
        })
        .collect();
    let merged = merge_tokens(
        cell,
        out_dim_partition(cell, split, d),
        d,
        n,
        MergePolicy::NumIndependent,
    );
    if merged.len() <= n {
        return (merged, AcceptType::RoughMerged);
    }
    let chunked = out_dim_partition(cell, rough, d);
    if chunked.len() <= n {
        return (chunked, AcceptType::RoughPartitioned);
    }

    let mass = out_dim_partition(cell, quasi_tokenize(cell, QuasiMode::Mass), d);
    let mut merged = merge_tokens(cell, mass, d, n, MergePolicy::Free);
    if merged.len() <= n {
        return (merged, AcceptType::Mass);
    }
    merged.truncate(n);
    (merged, AcceptType::Truncated)
}

#[cfg(test)]
mod tests;
