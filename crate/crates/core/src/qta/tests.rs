use super::*;
use alloc::vec;
use proptest::prelude::*;

fn texts(ts: &[TokenSpan]) -> Vec<&str> {
    ts.iter().map(|t| t.text.as_str()).collect()
}

fn spans(cell: &str, parts: &[(&str, TokenClass)]) -> Vec<TokenSpan> {
    let mut from = 0;
    parts
        .iter()
        .map(|&(p, class)| {
            let start = from + cell[from..].find(p).unwrap();
            from = start + p.len();
            TokenSpan::new(cell, start, from, class)
        })
        .collect()
}

/// Reference scan: classify every char, then group equal neighbours.
fn full_oracle(cell: &str) -> Vec<(String, TokenClass)> {
    let mut out: Vec<(String, CharClass)> = Vec::new();
    for c in cell.chars() {
        let cls = char_class(c);
        match out.last_mut() {
            Some((s, k)) if *k == cls => s.push(c),
            _ => out.push((c.to_string(), cls)),
        }
    }
    out.into_iter()
        .filter(|(_, k)| *k != CharClass::Space)
        .map(|(s, k)| {
            let class = match k {
                CharClass::Digit => TokenClass::Number,
                CharClass::Punct => TokenClass::Punct,
                _ => TokenClass::Word,
            };
            (s, class)
        })
        .collect()
}

#[test]
fn full_address() {
    let t = quasi_tokenize("3621 N Western Ave", QuasiMode::Full);
    assert_eq!(texts(&t), ["3621", "N", "Western", "Ave"]);
    assert_eq!(t[0].class, TokenClass::Number);
    assert!(t[1..].iter().all(|s| s.class == TokenClass::Word));
}

#[test]
fn full_alternating_digits() {
    let t = quasi_tokenize("1xx19", QuasiMode::Full);
    assert_eq!(texts(&t), ["1", "xx", "19"]);
    let classes: Vec<_> = t.iter().map(|s| s.class).collect();
    assert_eq!(classes, [TokenClass::Number, TokenClass::Word, TokenClass::Number]);
}

#[test]
fn full_punct_runs_and_exponents() {
    assert_eq!(
        texts(&quasi_tokenize("wait...what", QuasiMode::Full)),
        ["wait", "...", "what"]
    );
    assert_eq!(texts(&quasi_tokenize("6e-2", QuasiMode::Full)), ["6", "e", "-", "2"]);
}

#[test]
fn empty_cell() {
    for mode in [QuasiMode::Full, QuasiMode::Rough, QuasiMode::Mass] {
        assert!(quasi_tokenize("", mode).is_empty());
    }
    let tc = qta_tokenize("", 5, 3);
    assert_eq!(tc.accept_type, AcceptType::Full);
    assert!(tc.tokens.is_empty());
    assert_eq!(tc.embedding, Tensor2::zeros(3, 5));
    assert!(!tc.truncated);
}

#[test]
fn mass_split() {
    assert_eq!(texts(&quasi_tokenize("a b  c", QuasiMode::Mass)), ["a", "b", "c"]);
}

#[test]
fn rough_split() {
    let t = quasi_tokenize("3621 N Western Ave, 60618", QuasiMode::Rough);
    assert_eq!(texts(&t), ["3621", "N Western Ave,", "60618"]);
    assert_eq!(t[1].class, TokenClass::Mixed);
    assert_eq!(t[2].class, TokenClass::Number);
}

#[test]
fn partition_examples() {
    let cell = "abcdefgh";
    let out = out_dim_partition(cell, spans(cell, &[("abcdefgh", TokenClass::Word)]), 3);
    assert_eq!(texts(&out), ["abc", "def", "gh"]);

    let cell = "ab";
    let out = out_dim_partition(cell, spans(cell, &[("ab", TokenClass::Word)]), 3);
    assert_eq!(texts(&out), ["ab"]);

    let cell = "12345";
    let out = out_dim_partition(cell, spans(cell, &[("12345", TokenClass::Number)]), 2);
    assert_eq!(texts(&out), ["12", "34", "5"]);
    assert!(out.iter().all(|t| t.class == TokenClass::Number));
}

#[test]
fn partition_counts_chars_not_bytes() {
    let cell = "ééééé";
    let out = out_dim_partition(cell, quasi_tokenize(cell, QuasiMode::Full), 2);
    assert_eq!(texts(&out), ["éé", "éé", "é"]);
}

#[test]
fn punct_merge_minimal() {
    let cell = "A,B,C";
    let toks = quasi_tokenize(cell, QuasiMode::Full);
    assert_eq!(toks.len(), 5);
    let out = merge_tokens(cell, toks, 4, 4, MergePolicy::PunctIntoWord);
    assert_eq!(texts(&out), ["A,", "B", ",", "C"]);
}

#[test]
fn num_independent_leaves_numbers() {
    let cell = "12ab";
    let toks = quasi_tokenize(cell, QuasiMode::Full);
    let out = merge_tokens(cell, toks.clone(), 4, 1, MergePolicy::NumIndependent);
    assert_eq!(out, toks);
}

#[test]
fn free_merge_covers_gap() {
    let cell = "abcd";
    let toks = spans(cell, &[("ab", TokenClass::Word), ("cd", TokenClass::Word)]);
    let out = merge_tokens(cell, toks, 4, 1, MergePolicy::Free);
    assert_eq!(texts(&out), ["abcd"]);

    let cell = "ab cd";
    let toks = quasi_tokenize(cell, QuasiMode::Mass);
    assert_eq!(merge_tokens(cell, toks.clone(), 4, 1, MergePolicy::Free), toks);
    assert_eq!(texts(&merge_tokens(cell, toks, 5, 1, MergePolicy::Free)), ["ab cd"]);
}

#[test]
fn address_is_type_one() {
    let tc = qta_tokenize("3621 N Western Ave", 8, 4);
    assert_eq!(tc.accept_type, AcceptType::Full);
    assert_eq!(tc.token_count(), 4);
}

#[test]
fn commas_are_type_two() {
    let tc = qta_tokenize("A, B, C", 4, 4);
    assert_eq!(tc.accept_type, AcceptType::PunctMerged);
    assert_eq!(texts(&tc.tokens), ["A,", "B", ",", "C"]);
}

#[test]
fn long_word_is_truncated() {
    let cell = "abcdefghij".repeat(50);
    let tc = qta_tokenize(&cell, 8, 4);
    assert_eq!(tc.accept_type, AcceptType::Truncated);
    assert!(tc.truncated);
    assert_eq!(texts(&tc.tokens), ["abcdefgh", "ijabcdef", "ghijabcd", "efghijab"]);
}

#[test]
fn rough_branches() {
    let tc = qta_tokenize("ab cd 12", 5, 2);
    assert_eq!(tc.accept_type, AcceptType::RoughMerged);
    assert_eq!(texts(&tc.tokens), ["ab cd", "12"]);

    let tc = qta_tokenize("abc de fgh12", 5, 3);
    assert_eq!(tc.accept_type, AcceptType::RoughPartitioned);
    assert_eq!(texts(&tc.tokens), ["abc d", "e fgh", "12"]);

    let tc = qta_tokenize("ab cd ef 12 gh", 5, 3);
    assert_eq!(tc.accept_type, AcceptType::Mass);
    assert_eq!(texts(&tc.tokens), ["ab cd", "ef 12", "gh"]);
}

#[test]
fn embedding_rows() {
    let cell = "AB";
    let e = embed_tokens(&quasi_tokenize(cell, QuasiMode::Full), 4, 1).unwrap();
    assert_eq!(e.row(0), [65.0 / 65536.0, 66.0 / 65536.0, 0.0, 0.0]);

    assert_eq!(embed_tokens(&[], 3, 2).unwrap(), Tensor2::zeros(2, 3));

    let cell = "€";
    let e = embed_tokens(&quasi_tokenize(cell, QuasiMode::Full), 2, 1).unwrap();
    assert_eq!(e.row(0), [8364.0 / 65536.0, 0.0]);

    assert_eq!(code_point_value('\u{1F600}'), 65535.0 / 65536.0);
}

#[test]
fn embedding_rejects_oversize() {
    let cell = "abcde";
    let toks = quasi_tokenize(cell, QuasiMode::Full);
    assert!(embed_tokens(&toks, 4, 2).is_err());
    let cell = "a b c";
    let toks = quasi_tokenize(cell, QuasiMode::Full);
    assert!(embed_tokens(&toks, 4, 2).is_err());
}

#[test]
fn lexicon_dedups() {
    let table = crate::corpus::Table::new(
        vec!["a".into(), "b".into()],
        vec![
            vec!["x y".into(), "1".into()],
            vec!["x y".into(), "2".into()],
            vec!["z".into(), "1".into()],
        ],
    )
    .unwrap();
    let lex = Lexicon::build(&table, 4, 2);
    assert_eq!(lex.len(), 4);
    assert_eq!(lex.get("x y"), Some(&qta_tokenize("x y", 4, 2)));
    assert_eq!(lex.token_vector("x").unwrap(), &[120.0 / 65536.0, 0.0, 0.0, 0.0]);
    assert!(lex.get("new").is_none());
    let mut lex = lex;
    let got = lex.get_or_insert("new").clone();
    assert_eq!(got, qta_tokenize("new", 4, 2));
    assert_eq!(lex.len(), 5);
}

pub(crate) fn check_invariants(cell: &str, d: usize, n: usize, tc: &TokenizedCell) -> core::result::Result<(), String> {
    if tc.tokens.len() > n {
        return Err(format!("{} tokens > N = {n}", tc.tokens.len()));
    }
    let mut pos = 0;
    for t in &tc.tokens {
        if t.length > d || t.length == 0 {
            return Err(format!("token `{}` length {} vs D = {d}", t.text, t.length));
        }
        if t.start < pos || t.end > cell.len() || cell.get(t.start..t.end) != Some(t.text.as_str()) {
            return Err(format!("bad span {}..{}", t.start, t.end));
        }
        if (t.class == TokenClass::Number) != t.text.chars().all(charclass::is_digit) {
            return Err(format!("class of `{}`", t.text));
        }
        // Only whitespace may be skipped between tokens.
        if !cell[pos..t.start].chars().all(char::is_whitespace) {
            return Err(format!("non-space gap before `{}`", t.text));
        }
        pos = t.end;
    }
    let tail_ok = cell[pos..].chars().all(char::is_whitespace);
    if tc.accept_type != AcceptType::Truncated && !tail_ok {
        return Err("unreconstructed tail".into());
    }
    if tc.truncated != (tc.accept_type == AcceptType::Truncated) {
        return Err("truncated flag".into());
    }
    for k in 0..n {
        // U+0000 maps to 0, so only all-NUL tokens may embed as a zero row.
        let zero = tc.embedding.row(k).iter().all(|&v| v == 0.0);
        let expect_zero = tc.tokens.get(k).is_none_or(|t| t.text.chars().all(|c| c == '\0'));
        if zero != expect_zero {
            return Err(format!("embedding row {k}"));
        }
        if tc.embedding.row(k).iter().any(|&v| !(0.0..1.0).contains(&v)) {
            return Err(format!("embedding range row {k}"));
        }
    }
    Ok(())
}

fn cell_strategy() -> impl Strategy<Value = String> {
    let pieces = prop_oneof![
        3 => "[a-zA-Z]{1,12}",
        3 => "[0-9]{1,10}",
        2 => "[ ,.;:/#()-]{1,3}",
        1 => "[ \t]{1,3}",
        1 => any::<char>().prop_map(|c| c.to_string()),
        1 => "[éü中€٣]{1,4}",
    ];
    proptest::collection::vec(pieces, 0..20).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn invariants_hold(cell in cell_strategy(), d in 1usize..=64, n in 1usize..=32) {
        let tc = qta_tokenize(&cell, d, n);
        if let Err(e) = check_invariants(&cell, d, n, &tc) {
            return Err(TestCaseError::fail(format!("{e} for {cell:?} D={d} N={n}: {tc:?}")));
        }
    }

    #[test]
    fn full_matches_oracle(cell in cell_strategy()) {
        let got: Vec<(String, TokenClass)> = quasi_tokenize(&cell, QuasiMode::Full)
            .into_iter()
            .map(|t| (t.text, t.class))
            .collect();
        prop_assert_eq!(got, full_oracle(&cell));
    }

    #[test]
    fn deterministic(cell in cell_strategy(), d in 1usize..=16, n in 1usize..=8) {
        prop_assert_eq!(qta_tokenize(&cell, d, n), qta_tokenize(&cell, d, n));
    }

    #[test]
    fn monotone_capacity(
        cell in cell_strategy(),
        d in 1usize..=16,
        n in 1usize..=8,
        dd in 0usize..=8,
        dn in 0usize..=4,
    ) {
        let small = qta_tokenize(&cell, d, n).accept_type;
        let large = qta_tokenize(&cell, d + dd, n + dn).accept_type;
        prop_assert!(large <= small, "{cell:?}: ({d},{n}) -> {small}, ({},{}) -> {large}", d + dd, n + dn);
    }

    #[test]
    fn partition_bounds(cell in cell_strategy(), d in 1usize..=8) {
        let out = out_dim_partition(&cell, quasi_tokenize(&cell, QuasiMode::Mass), d);
        prop_assert!(out.iter().all(|t| t.length <= d));
        let joined: String = out.iter().map(|t| t.text.as_str()).collect();
        let expected: String = cell.split_whitespace().collect();
        prop_assert_eq!(joined, expected);
    }

    #[test]
    fn merges_respect_d(cell in cell_strategy(), d in 1usize..=12, n in 1usize..=6) {
        let toks = out_dim_partition(&cell, quasi_tokenize(&cell, QuasiMode::Full), d);
        for policy in [MergePolicy::PunctIntoWord, MergePolicy::NumIndependent, MergePolicy::Free] {
            let out = merge_tokens(&cell, toks.clone(), d, n, policy);
            prop_assert!(out.len() <= toks.len());
            prop_assert!(out.iter().all(|t| t.length <= d && cell[t.start..t.end] == t.text));
        }
    }
}
