//! Binary lexicon cache and the threaded lexicon build.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "PATLEX\0\0" | version u32 | d u32 | n u32 | records u64
//! per record: text_len u32 | text | accept u8 | truncated u8 | tokens u32
//!             | tokens x (start u32 | end u32 | class u8) | n*d x f32
//! sha256 of everything above (32 bytes)
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use pat_core::autodiff::Tensor2;
use pat_core::corpus::Table;
use pat_core::qta::{qta_tokenize, AcceptType, Lexicon, TokenClass, TokenSpan, TokenizedCell};

use crate::binfmt::{unseal, Reader, Writer};
use crate::error::{IoContext, PatError, Result};

pub const LEXICON_MAGIC: &[u8; 8] = b"PATLEX\0\0";
pub const LEXICON_VERSION: u32 = 1;

/// Tokenizes every distinct cell of `table` on `threads` workers. The
/// result equals `Lexicon::build(table, d, n)` for any thread count.
pub fn build_lexicon(table: &Table, d: usize, n: usize, threads: usize) -> Lexicon {
    let distinct: Vec<&str> = table
        .cells()
        .map(|(_, _, c)| c)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut lex = Lexicon::new(d, n);
    let threads = threads.max(1).min(distinct.len().max(1));
    if threads == 1 {
        for cell in distinct {
            lex.get_or_insert(cell);
        }
        return lex;
    }
    let chunk = distinct.len().div_ceil(threads);
    let parts: Vec<Vec<TokenizedCell>> = std::thread::scope(|s| {
        let handles: Vec<_> = distinct
            .chunks(chunk)
            .map(|cells| s.spawn(move || cells.iter().map(|c| qta_tokenize(c, d, n)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tokenizer worker panicked"))
            .collect()
    });
    for (cell, tc) in distinct.iter().zip(parts.into_iter().flatten()) {
        lex.insert((*cell).to_string(), tc);
    }
    lex
}

pub fn encode_lexicon(lex: &Lexicon) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(LEXICON_MAGIC);
    w.u32(LEXICON_VERSION as usize);
    w.u32(lex.d());
    w.u32(lex.n());
    w.u64(lex.len() as u64);
    for (text, tc) in lex.cells() {
        w.u32(text.len());
        w.bytes(text.as_bytes());
        w.u8(tc.accept_type.as_u8());
        w.u8(tc.truncated as u8);
        w.u32(tc.tokens.len());
        for t in &tc.tokens {
            w.u32(t.start);
            w.u32(t.end);
            w.u8(t.class.code());
        }
        w.f32s(tc.embedding.data());
    }
    w.seal()
}

/// Decodes a cache; `origin` only labels errors.
pub fn decode_lexicon(bytes: &[u8], origin: &Path) -> Result<Lexicon> {
    let bad = |m: &str| PatError::data(origin, format!("lexicon cache: {m}"));
    if bytes.len() < LEXICON_MAGIC.len() + 20 + 32 || &bytes[..8] != LEXICON_MAGIC {
        return Err(bad("not a lexicon cache"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != LEXICON_VERSION {
        return Err(bad(&format!("format version {version}, expected {LEXICON_VERSION}")));
    }
    let body = unseal(bytes).ok_or_else(|| bad("checksum mismatch"))?;
    let mut cur = Reader::new(body, 12);
    let truncated = || bad("truncated record");
    let d = cur.u32().ok_or_else(truncated)?;
    let n = cur.u32().ok_or_else(truncated)?;
    let count = cur.u64().ok_or_else(truncated)?;
    let mut lex = Lexicon::new(d, n);
    if lex.d() != d || lex.n() != n {
        return Err(bad("zero D or N"));
    }
    for _ in 0..count {
        let len = cur.u32().ok_or_else(truncated)?;
        let text = std::str::from_utf8(cur.take(len).ok_or_else(truncated)?)
            .map_err(|_| bad("cell text is not UTF-8"))?
            .to_string();
        let accept_type =
            AcceptType::from_u8(cur.u8().ok_or_else(truncated)?).ok_or_else(|| bad("unknown accept type"))?;
        let was_truncated = match cur.u8().ok_or_else(truncated)? {
            0 => false,
            1 => true,
            _ => return Err(bad("bad truncation flag")),
        };
        let n_tokens = cur.u32().ok_or_else(truncated)?;
        if n_tokens > n {
            return Err(bad("more tokens than N"));
        }
        let mut tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let start = cur.u32().ok_or_else(truncated)?;
            let end = cur.u32().ok_or_else(truncated)?;
            let class =
                TokenClass::from_code(cur.u8().ok_or_else(truncated)?).ok_or_else(|| bad("unknown token class"))?;
            if start > end || !text.is_char_boundary(start) || !text.is_char_boundary(end) || end > text.len() {
                return Err(bad("token span outside its cell"));
            }
            tokens.push(TokenSpan::new(&text, start, end, class));
        }
        let data = cur.f32s(n * d).ok_or_else(truncated)?;
        let embedding = Tensor2::from_vec(n, d, data)?;
        lex.insert(
            text,
            TokenizedCell {
                tokens,
                accept_type,
                embedding,
                truncated: was_truncated,
            },
        );
    }
    if !cur.at_end() {
        return Err(bad("trailing bytes"));
    }
    Ok(lex)
}

pub fn save_lexicon(path: &Path, lex: &Lexicon) -> Result<()> {
    std::fs::write(path, encode_lexicon(lex)).at(path)
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let bytes = std::fs::read(path).at(path)?;
    decode_lexicon(&bytes, path)
}
