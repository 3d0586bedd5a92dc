//! Corpus statistics and automatic choice of `D`, `N` and their compact
//! variants.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Table;
use crate::error::{Error, Result};
use crate::qta::{quasi_tokenize, QuasiMode};

/// Hyperparameters are clamped to this range.
pub const MAX_HYPER: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusProfile {
    /// Distinct full quasi-token texts.
    pub vocab: BTreeSet<String>,
    /// Full quasi-token count per cell, row-major.
    pub token_counts: Vec<usize>,
    /// Character length per cell, row-major.
    pub cell_lengths: Vec<usize>,
    /// Character length of each entry of `vocab`, in the same order.
    pub token_lengths: Vec<usize>,
}

impl CorpusProfile {
    pub fn n_cells(&self) -> usize {
        self.token_counts.len()
    }
}

/// Histogram binning for the critical point search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinPolicy {
    /// One bin per integer in `[min, max]`; values are rounded to the
    /// nearest integer.
    UnitInteger,
    /// A fixed number of equal-width bins over `[min, max]`.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilerConfig {
    pub beta: f64,
    pub beta_c: f64,
    pub mu_l: f64,
    pub mu_r: f64,
    pub mu_cl: f64,
    pub mu_cr: f64,
    pub mu_long: f64,
    pub bins: BinPolicy,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            beta_c: 1.5,
            mu_l: 50.0,
            mu_r: 99.0,
            mu_cl: 50.0,
            mu_cr: 90.0,
            mu_long: 95.0,
            bins: BinPolicy::UnitInteger,
        }
    }
}

impl ProfilerConfig {
    pub fn validate(&self) -> Result<()> {
        let pct = |x: f64| (0.0..=100.0).contains(&x);
        if !(self.beta > 0.0 && self.beta_c > 0.0) {
            return Err(Error::Config("beta and beta_c must be positive".into()));
        }
        if self.beta_c < self.beta {
            return Err(Error::Config("beta_c must be at least beta".into()));
        }
        for (name, l, r) in [
            ("mu_l/mu_r", self.mu_l, self.mu_r),
            ("mu_cl/mu_cr", self.mu_cl, self.mu_cr),
        ] {
            if !(pct(l) && pct(r) && l < r) {
                return Err(Error::Config(format!("{name} must satisfy 0 <= left < right <= 100")));
            }
        }
        if !pct(self.mu_long) {
            return Err(Error::Config("mu_long must lie in [0, 100]".into()));
        }
        if self.bins == BinPolicy::Count(0) {
            return Err(Error::Config("bin count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperParams {
    pub d: usize,
    pub n: usize,
    pub d_c: usize,
    pub n_c: usize,
    /// Long-cell length used to derive `n_c`.
    pub s_long: usize,
}

/// Counts full quasi-tokens and characters of every cell.
pub fn profile_corpus(table: &Table) -> Result<CorpusProfile> {
    if table.n_cells() == 0 {
        return Err(Error::Empty("table has no cells"));
    }
    let mut p = CorpusProfile {
        token_counts: Vec::with_capacity(table.n_cells()),
        cell_lengths: Vec::with_capacity(table.n_cells()),
        ..CorpusProfile::default()
    };
    for (_, _, cell) in table.cells() {
        let tokens = quasi_tokenize(cell, QuasiMode::Full);
        p.token_counts.push(tokens.len());
        p.cell_lengths.push(cell.chars().count());
        for t in tokens {
            if !p.vocab.contains(&t.text) {
                p.vocab.insert(t.text);
            }
        }
    }
    p.token_lengths = p.vocab.iter().map(|t| t.chars().count()).collect();
    Ok(p)
}

/// Nearest-rank percentile: the smallest value with at least `p`% of the
/// data at or below it. `p = 0` gives the minimum.
pub fn percentile(a: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("percentile of empty array"));
    }
    let mut sorted = a.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), p)])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    let rank = libm::ceil(p / 100.0 * n as f64) as usize;
    rank.clamp(1, n) - 1
}

/// Frequency histogram: bin centers and counts.
pub fn histogram(a: &[f64], bins: BinPolicy) -> Result<(Vec<f64>, Vec<usize>)> {
    if a.is_empty() {
        return Err(Error::Empty("histogram of empty array"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("histogram input".into()));
    }
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match bins {
        BinPolicy::UnitInteger => {
            let (lo, hi) = (libm::round(lo), libm::round(hi));
            let k = (hi - lo) as usize + 1;
            let mut y = vec![0; k];
            for &v in a {
                y[(libm::round(v) - lo) as usize] += 1;
            }
            Ok(((0..k).map(|i| lo + i as f64).collect(), y))
        }
        BinPolicy::Count(k) => {
            let k = k.max(1);
            let w = (hi - lo) / k as f64;
            let mut y = vec![0; k];
            for &v in a {
                let i = if w > 0.0 { ((v - lo) / w) as usize } else { 0 };
                y[i.min(k - 1)] += 1;
            }
            let centers = (0..k).map(|i| lo + (i as f64 + 0.5) * w).collect();
            Ok((centers, y))
        }
    }
}

/// Index of the bin holding `v`.
fn bin_of(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, &c) in centers.iter().enumerate() {
        if (c - v).abs() < (centers[best] - v).abs() {
            best = i;
        }
    }
    best
}

/// Split index over high/low labels minimizing (lows before) + (highs
/// from the split on). Ties go to the smallest index.
pub fn binary_divide_point(high: &[bool]) -> usize {
    let mut cost: usize = high.iter().filter(|&&h| h).count();
    let (mut best, mut best_cost) = (0, cost);
    for (i, &h) in high.iter().enumerate() {
        if h {
            cost -= 1;
        } else {
            cost += 1;
        }
        if cost < best_cost {
            best = i + 1;
            best_cost = cost;
        }
    }
    best
}

/// Critical point of a length or count distribution with unit-width bins.
pub fn critical_point_find(a: &[f64], beta: f64, mu_left: f64, mu_right: f64) -> Result<f64> {
    critical_point_find_with(a, beta, mu_left, mu_right, BinPolicy::UnitInteger)
}

/// Returns the center of the first bin after the high-frequency head of
/// the region of interest between the `mu_left` and `mu_right`
/// percentiles. Bins count as high when their frequency reaches
/// `beta` times the mean frequency over all bins.
pub fn critical_point_find_with(a: &[f64], beta: f64, mu_left: f64, mu_right: f64, bins: BinPolicy) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("critical point of empty array"));
    }
    if !(beta > 0.0) || !(0.0..=100.0).contains(&mu_left) || !(mu_left < mu_right && mu_right <= 100.0) {
        return Err(Error::Config(format!(
            "invalid critical point parameters beta={beta} mu=({mu_left}, {mu_right})"
        )));
    }
    let (x, y) = histogram(a, bins)?;
    let roi_start = bin_of(&x, percentile(a, mu_left)?);
    let roi_end = bin_of(&x, percentile(a, mu_right)?).max(roi_start);
    let mean = y.iter().sum::<usize>() as f64 / y.len() as f64;
    let threshold = beta * mean;
    let high: Vec<bool> = y[roi_start..=roi_end].iter().map(|&c| c as f64 >= threshold).collect();
    let i = binary_divide_point(&high).min(high.len() - 1);
    Ok(x[roi_start + i])
}

fn clamp_hyper(v: f64) -> usize {
    (libm::round(v).max(1.0) as usize).min(MAX_HYPER)
}

/// Chooses `D`, `N`, `D_c` and `N_c` from a corpus profile.
pub fn token_dim_num_setup(profile: &CorpusProfile, cfg: &ProfilerConfig) -> Result<HyperParams> {
    cfg.validate()?;
    if profile.token_lengths.is_empty() || profile.token_counts.is_empty() {
        return Err(Error::Empty("profile has no tokens"));
    }
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let lengths = as_f64(&profile.token_lengths);
    let counts = as_f64(&profile.token_counts);
    let d = critical_point_find_with(&lengths, cfg.beta, cfg.mu_l, cfg.mu_r, cfg.bins)?;
    let n = critical_point_find_with(&counts, cfg.beta, cfg.mu_l, cfg.mu_r, cfg.bins)?;
    let d_c = clamp_hyper(critical_point_find_with(
        &lengths, cfg.beta_c, cfg.mu_cl, cfg.mu_cr, cfg.bins,
    )?);
    let s_long = percentile(&as_f64(&profile.cell_lengths), cfg.mu_long)? as usize;
    Ok(HyperParams {
        d: clamp_hyper(d),
        n: clamp_hyper(n),
        d_c,
        n_c: (s_long / d_c).clamp(1, MAX_HYPER),
        s_long,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    /// Direct transcription: labels from a fresh histogram, every split
    /// index costed independently.
    fn cpf_oracle(a: &[f64], beta: f64, mu_l: f64, mu_r: f64) -> f64 {
        let mut s = a.to_vec();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let mut r = 1;
            while (r as f64) < p / 100.0 * s.len() as f64 {
                r += 1;
            }
            s[r.min(s.len()) - 1]
        };
        let (lo, hi) = (s[0] as i64, s[s.len() - 1] as i64);
        let bins: Vec<i64> = (lo..=hi).collect();
        let freq: Vec<usize> = bins
            .iter()
            .map(|&b| s.iter().filter(|&&v| v as i64 == b).count())
            .collect();
        let mean = a.len() as f64 / bins.len() as f64;
        let (l, r) = ((pct(mu_l) as i64 - lo) as usize, (pct(mu_r) as i64 - lo) as usize);
        let labels: Vec<bool> = (l..=r).map(|i| freq[i] as f64 >= beta * mean).collect();
        let cost = |i: usize| labels[..i].iter().filter(|h| !**h).count() + labels[i..].iter().filter(|h| **h).count();
        let best = (0..=labels.len()).min_by_key(|&i| (cost(i), i)).unwrap();
        bins[l + best.min(labels.len() - 1)] as f64
    }

    fn table(cells: &[&str]) -> Table {
        Table::new(
            vec!["a".to_string()],
            cells.iter().map(|c| vec![c.to_string()]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn profile_single_cell() {
        let p = profile_corpus(&table(&["ab cd"])).unwrap();
        assert_eq!(p.token_counts, [2]);
        assert_eq!(p.cell_lengths, [5]);
        assert_eq!(p.vocab.iter().collect::<Vec<_>>(), ["ab", "cd"]);
        assert_eq!(p.token_lengths, [2, 2]);
    }

    #[test]
    fn profile_dedups() {
        let one = profile_corpus(&table(&["x 1"])).unwrap();
        let two = profile_corpus(&table(&["x 1", "x 1"])).unwrap();
        assert_eq!(one.vocab, two.vocab);
        assert_eq!(two.token_counts, [2, 2]);
    }

    #[test]
    fn profile_empty_table() {
        let t = Table::new(vec!["a".into()], vec![]).unwrap();
        assert!(profile_corpus(&t).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let a = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile(&a, 0.0).unwrap(), 15.0);
        assert_eq!(percentile(&a, 30.0).unwrap(), 20.0);
        assert_eq!(percentile(&a, 40.0).unwrap(), 20.0);
        assert_eq!(percentile(&a, 50.0).unwrap(), 35.0);
        assert_eq!(percentile(&a, 100.0).unwrap(), 50.0);
    }

    #[test]
    fn constant_array() {
        assert_eq!(critical_point_find(&[5.0; 4], 0.5, 50.0, 99.0).unwrap(), 5.0);
    }

    #[test]
    fn head_split() {
        let mut a = vec![4.0; 80];
        a.extend([5.0; 15]);
        a.extend([20.0; 5]);
        let got = critical_point_find(&a, 0.5, 0.0, 100.0).unwrap();
        assert_eq!(got, cpf_oracle(&a, 0.5, 0.0, 100.0));
        assert_eq!(got, 6.0);
    }

    #[test]
    fn all_low_returns_left_boundary() {
        // ROI [10, 12] holds single hits, far below half the mean bin count.
        let mut a = vec![1.0; 200];
        a.extend([10.0, 11.0, 12.0]);
        let got = critical_point_find(&a, 0.5, 99.0, 100.0).unwrap();
        assert_eq!(got, 10.0);
        let got = critical_point_find(&[1.0, 1.0, 1.0, 7.0, 8.0, 9.0], 5.0, 50.0, 100.0).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(critical_point_find(&[], 0.5, 0.0, 100.0).is_err());
        assert!(critical_point_find(&[1.0], 0.0, 0.0, 100.0).is_err());
        assert!(critical_point_find(&[1.0], 0.5, 60.0, 50.0).is_err());
    }

    #[test]
    fn compact_n() {
        let p = CorpusProfile {
            vocab: ["abcdefgh".to_string()].into_iter().collect(),
            token_counts: vec![5],
            cell_lengths: vec![40],
            token_lengths: vec![8],
        };
        let hp = token_dim_num_setup(&p, &ProfilerConfig::default()).unwrap();
        assert_eq!((hp.d_c, hp.s_long, hp.n_c), (8, 40, 5));
    }

    #[test]
    fn constant_corpus() {
        let p = profile_corpus(&table(&["abc def"; 10])).unwrap();
        let hp = token_dim_num_setup(&p, &ProfilerConfig::default()).unwrap();
        assert_eq!((hp.d, hp.n), (3, 2));
    }

    #[test]
    fn setup_matches_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let words = ["st", "ave", "north", "blvd", "x", "springfield", "#"];
        let cells: Vec<String> = (0..1000)
            .map(|_| {
                let k = rng.random_range(1..6);
                let mut s = rng.random_range(1..99999).to_string();
                for _ in 0..k {
                    s.push(' ');
                    s.push_str(words[rng.random_range(0..words.len())]);
                }
                s
            })
            .collect();
        let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
        let p = profile_corpus(&table(&refs)).unwrap();
        let cfg = ProfilerConfig::default();
        let hp = token_dim_num_setup(&p, &cfg).unwrap();

        let lens: Vec<f64> = p.token_lengths.iter().map(|&x| x as f64).collect();
        let counts: Vec<f64> = p.token_counts.iter().map(|&x| x as f64).collect();
        let d_c = cpf_oracle(&lens, cfg.beta_c, cfg.mu_cl, cfg.mu_cr) as usize;
        let mut cl = p.cell_lengths.clone();
        cl.sort();
        let s_long = cl[(0.95f64 * 1000.0).ceil() as usize - 1];
        assert_eq!(hp.d, cpf_oracle(&lens, cfg.beta, cfg.mu_l, cfg.mu_r) as usize);
        assert_eq!(hp.n, cpf_oracle(&counts, cfg.beta, cfg.mu_l, cfg.mu_r) as usize);
        assert_eq!(hp.d_c, d_c);
        assert_eq!(hp.s_long, s_long);
        assert_eq!(hp.n_c, s_long / d_c);
    }

    #[test]
    fn count_bins() {
        let (x, y) = histogram(&[0.0, 0.5, 1.0, 4.0], BinPolicy::Count(4)).unwrap();
        assert_eq!(x, [0.5, 1.5, 2.5, 3.5]);
        assert_eq!(y, [2, 1, 0, 1]);
        let got = critical_point_find_with(&[0.0, 0.5, 1.0, 4.0], 0.5, 0.0, 100.0, BinPolicy::Count(4)).unwrap();
        assert!((0.0..=4.0).contains(&got));
    }

    fn int_array() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![3 => 1u32..8, 1 => 1u32..60], 1..200)
            .prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in int_array(), beta in 0.1f64..3.0, l in 0.0f64..60.0, w in 1.0f64..40.0) {
            let r = (l + w).min(100.0);
            prop_assert_eq!(critical_point_find(&a, beta, l, r).unwrap(), cpf_oracle(&a, beta, l, r));
        }

        #[test]
        fn within_range(a in int_array(), beta in 0.1f64..3.0) {
            let got = critical_point_find(&a, beta, 50.0, 99.0).unwrap();
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= got && got <= hi);
        }

        #[test]
        fn permutation_invariant(a in int_array(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut b = a.clone();
            b.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                critical_point_find(&a, 0.5, 50.0, 99.0).unwrap(),
                critical_point_find(&b, 0.5, 50.0, 99.0).unwrap()
            );
        }

        #[test]
        fn beta_monotone(a in int_array(), b1 in 0.1f64..3.0, db in 0.0f64..3.0) {
            let lo = critical_point_find(&a, b1, 20.0, 99.0).unwrap();
            let hi = critical_point_find(&a, b1 + db, 20.0, 99.0).unwrap();
            prop_assert!(hi <= lo);
        }
    }
}
