//! Exhaustive k-tuple scan: every strictly increasing tuple of descriptor
//! indices is tabulated against the response, each member's conditional
//! mutual information given the rest of the tuple is computed, and the
//! results reduce to one extreme statistic per variable.
//!
//! The tuple space splits into contiguous rank ranges processed in
//! parallel. Each worker owns a private score array; partial results merge
//! with an associative, commutative rule (max CMI, ties to the
//! lexicographically smallest tuple), so the outcome is bit-identical for
//! any worker count and any range partition.

pub mod combinatorics;
pub mod info;

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calibrate::chi2::{chi2_survival, Chi2Error};
use crate::dataset::DiscreteMatrix;
use combinatorics::{binomial, combination_at_rank, next_combination};
use info::{EvalScratch, XlnxTable, MAX_TABLE_CELLS};

#[derive(Debug, Error, PartialEq)]
pub enum ScanError {
    #[error("k must be at least 1")]
    KZero,
    #[error("k = {k} exceeds the number of variables {n}")]
    KTooLarge { n: usize, k: usize },
    #[error("matrix has no variables")]
    NoVariables,
    #[error("equal-cardinality mode requires uniform descriptor cardinalities, found {0:?}")]
    MixedCardinalities(Vec<usize>),
    #[error("contingency tables would need {cells} cells (limit {limit})")]
    TableTooLarge { cells: u128, limit: usize },
    #[error("tuple count C({n}, {k}) overflows a 64-bit counter")]
    TooManyTuples { n: usize, k: usize },
    #[error("chi-squared evaluation failed: {0}")]
    Chi2(#[from] Chi2Error),
    #[error("cannot merge score lists covering different variables")]
    MismatchedVariables,
    #[error("cannot merge empty score list")]
    EmptyMerge,
    #[error("worker pool construction failed: {0}")]
    Pool(String),
}

/// How per-tuple statistics reduce to a per-variable extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// All descriptors share one cardinality, so the minimum chi-squared
    /// p-value coincides with the maximum CMI and one p-value per variable
    /// suffices.
    EqualCardinality,
    /// Mixed cardinalities: a chi-squared p-value is computed per
    /// (tuple, member) and the minimum is recorded.
    Mixed,
}

pub struct ScanOptions<'a> {
    pub mode: ScanMode,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    /// Called with (tuples_done, tuples_total) roughly every
    /// `progress_stride` tuples.
    pub progress: Option<&'a (dyn Fn(u64, u64) + Sync)>,
    pub progress_stride: u64,
}

impl Default for ScanOptions<'_> {
    fn default() -> Self {
        ScanOptions {
            mode: ScanMode::EqualCardinality,
            workers: 0,
            progress: None,
            progress_stride: 1 << 16,
        }
    }
}

/// Per-variable running extreme over all tuples containing the variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableScore {
    pub variable: usize,
    /// Largest conditional mutual information seen, in nats.
    pub max_cmi: f64,
    /// Tuple achieving `max_cmi`; ties keep the lexicographically smallest.
    pub best_tuple: Vec<usize>,
    /// Chi-squared degrees of freedom at the maximum.
    pub best_df: u64,
    /// Minimum chi-squared p-value over all tuples; populated on the
    /// mixed-cardinality path.
    pub min_chi2_p: Option<f64>,
    /// Number of (tuple, discretization) tests aggregated into this score.
    pub n_tests: u64,
}

#[derive(Clone)]
struct PartialScore {
    max_cmi: f64,
    best_tuple: Vec<usize>,
    best_df: u64,
    min_p: f64,
    n_tests: u64,
}

impl PartialScore {
    fn empty() -> Self {
        PartialScore {
            max_cmi: f64::NEG_INFINITY,
            best_tuple: Vec::new(),
            best_df: 0,
            min_p: f64::INFINITY,
            n_tests: 0,
        }
    }

    #[inline]
    fn record(&mut self, cmi: f64, tuple: &[usize], df: u64, p: Option<f64>) {
        self.n_tests += 1;
        if cmi > self.max_cmi
            || (cmi == self.max_cmi && tuple < self.best_tuple.as_slice())
        {
            self.max_cmi = cmi;
            self.best_tuple.clear();
            self.best_tuple.extend_from_slice(tuple);
            self.best_df = df;
        }
        if let Some(p) = p {
            if p < self.min_p {
                self.min_p = p;
            }
        }
    }

    fn absorb(&mut self, other: &PartialScore) {
        if other.n_tests == 0 {
            return;
        }
        self.n_tests += other.n_tests;
        if other.max_cmi > self.max_cmi
            || (other.max_cmi == self.max_cmi && other.best_tuple < self.best_tuple)
        {
            self.max_cmi = other.max_cmi;
            self.best_tuple = other.best_tuple.clone();
            self.best_df = other.best_df;
        }
        if other.min_p < self.min_p {
            self.min_p = other.min_p;
        }
    }
}

/// Scans every k-tuple and reduces to one [`VariableScore`] per variable.
pub fn scan_k(
    matrix: &DiscreteMatrix,
    k: usize,
    options: &ScanOptions,
) -> Result<Vec<VariableScore>, ScanError> {
    let n_vars = matrix.codes.len();
    if n_vars == 0 {
        return Err(ScanError::NoVariables);
    }
    if k == 0 {
        return Err(ScanError::KZero);
    }
    if k > n_vars {
        return Err(ScanError::KTooLarge { n: n_vars, k });
    }
    if options.mode == ScanMode::EqualCardinality {
        let first = matrix.cardinalities[0];
        if matrix.cardinalities.iter().any(|&c| c != first) {
            return Err(ScanError::MixedCardinalities(matrix.cardinalities.clone()));
        }
    }
    let mut sorted_cards = matrix.cardinalities.clone();
    sorted_cards.sort_unstable_by(|a, b| b.cmp(a));
    let worst_cells: u128 = sorted_cards
        .iter()
        .take(k)
        .map(|&c| c as u128)
        .product::<u128>()
        * matrix.response_cardinality as u128;
    if worst_cells > MAX_TABLE_CELLS as u128 {
        return Err(ScanError::TableTooLarge {
            cells: worst_cells,
            limit: MAX_TABLE_CELLS,
        });
    }

    let total = binomial(n_vars as u64, k as u64)
        .ok_or(ScanError::TooManyTuples { n: n_vars, k })?;

    let c_y = matrix.response_cardinality;
    let xlnx = XlnxTable::new(matrix.n_objects);
    // Response code folded into each variable's codes so the innermost
    // tabulation loop is a single add per object.
    let fused: Vec<Vec<u32>> = matrix
        .codes
        .iter()
        .map(|codes| {
            codes
                .iter()
                .zip(&matrix.response_codes)
                .map(|(&c, &y)| c * c_y as u32 + y)
                .collect()
        })
        .collect();

    let threads = if options.workers == 0 {
        rayon::current_num_threads()
    } else {
        options.workers
    };
    let chunk_count = ((threads as u64) * 4).clamp(1, total.max(1));
    let chunk_len = total.div_ceil(chunk_count);
    let ranges: Vec<(u64, u64)> = (0..chunk_count)
        .map(|c| {
            let start = c * chunk_len;
            (start, ((c + 1) * chunk_len).min(total))
        })
        .filter(|(s, e)| s < e)
        .collect();

    let done = AtomicU64::new(0);
    let ctx = ScanContext {
        matrix,
        fused: &fused,
        xlnx: &xlnx,
        k,
        mode: options.mode,
        total,
        done: &done,
        progress: options.progress,
        stride: options.progress_stride.max(1),
    };

    let scan_all = || -> Result<Vec<PartialScore>, ScanError> {
        ranges
            .par_iter()
            .map(|&(start, end)| scan_range(&ctx, start, end))
            .try_reduce(
                || vec![PartialScore::empty(); n_vars],
                |mut acc, part| {
                    for (a, p) in acc.iter_mut().zip(&part) {
                        a.absorb(p);
                    }
                    Ok(acc)
                },
            )
    };

    let partials = if options.workers == 0 {
        scan_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| ScanError::Pool(e.to_string()))?;
        pool.install(scan_all)?
    };

    if let Some(cb) = options.progress {
        cb(total, total);
    }

    Ok(partials
        .into_iter()
        .enumerate()
        .map(|(variable, p)| VariableScore {
            variable,
            max_cmi: p.max_cmi,
            best_tuple: p.best_tuple,
            best_df: p.best_df,
            min_chi2_p: (options.mode == ScanMode::Mixed).then_some(p.min_p),
            n_tests: p.n_tests,
        })
        .collect())
}

struct ScanContext<'a> {
    matrix: &'a DiscreteMatrix,
    fused: &'a [Vec<u32>],
    xlnx: &'a XlnxTable,
    k: usize,
    mode: ScanMode,
    total: u64,
    done: &'a AtomicU64,
    progress: Option<&'a (dyn Fn(u64, u64) + Sync)>,
    stride: u64,
}

fn scan_range(ctx: &ScanContext, start: u64, end: u64) -> Result<Vec<PartialScore>, ScanError> {
    let matrix = ctx.matrix;
    let n_vars = matrix.codes.len();
    let n = matrix.n_objects;
    let k = ctx.k;
    let c_y = matrix.response_cardinality;

    let mut scores = vec![PartialScore::empty(); n_vars];
    let mut combo = combination_at_rank(start, n_vars, k).expect("range within total");

    let mut table: Vec<u32> = Vec::new();
    let mut dims = vec![0usize; k];
    let mut cmi = vec![0.0f64; k];
    let mut df = vec![0u64; k];
    let mut scratch = EvalScratch::new();

    // Composite code over the first k-1 members, maintained while they stay
    // fixed; pre-scaled by the last member's stride when cardinalities are
    // uniform so the tabulation loop is one add per object.
    let mut prefix: Vec<u32> = vec![0; if k >= 2 { n } else { 0 }];
    let mut prefix_of: Vec<usize> = Vec::new();
    let uniform_card = matrix
        .cardinalities
        .iter()
        .all(|&c| c == matrix.cardinalities[0]);
    let uniform_stride = matrix.cardinalities[0] * c_y;

    let mut since_tick = 0u64;
    for rank in start..end {
        if rank > start && !next_combination(&mut combo, n_vars) {
            unreachable!("rank range exceeds combination space");
        }
        for (d, &v) in dims.iter_mut().zip(&combo) {
            *d = matrix.cardinalities[v];
        }
        let cells: usize = dims.iter().product::<usize>() * c_y;
        table.clear();
        table.resize(cells, 0);

        if k == 1 {
            let fused = &ctx.fused[combo[0]];
            for &f in fused {
                table[f as usize] += 1;
            }
        } else {
            if prefix_of != combo[..k - 1] {
                prefix_of.clear();
                prefix_of.extend_from_slice(&combo[..k - 1]);
                rebuild_prefix(
                    &mut prefix,
                    matrix,
                    &combo[..k - 1],
                    if uniform_card { uniform_stride as u32 } else { 1 },
                );
            }
            let fused = &ctx.fused[combo[k - 1]];
            if uniform_card {
                for (i, &f) in fused.iter().enumerate() {
                    table[(prefix[i] + f) as usize] += 1;
                }
            } else {
                let stride = dims[k - 1] * c_y;
                for (i, &f) in fused.iter().enumerate() {
                    table[prefix[i] as usize * stride + f as usize] += 1;
                }
            }
        }

        info::eval_members(&table, &dims, c_y, n, ctx.xlnx, &mut scratch, &mut cmi, &mut df);

        for (pos, &v) in combo.iter().enumerate() {
            let p = match ctx.mode {
                ScanMode::EqualCardinality => None,
                ScanMode::Mixed => Some(chi2_survival(2.0 * n as f64 * cmi[pos], df[pos])?),
            };
            scores[v].record(cmi[pos], &combo, df[pos], p);
        }

        since_tick += 1;
        if since_tick >= ctx.stride {
            let done = ctx.done.fetch_add(since_tick, Ordering::Relaxed) + since_tick;
            since_tick = 0;
            if let Some(cb) = ctx.progress {
                cb(done, ctx.total);
            }
        }
    }
    if since_tick > 0 {
        ctx.done.fetch_add(since_tick, Ordering::Relaxed);
    }
    Ok(scores)
}

fn rebuild_prefix(prefix: &mut [u32], matrix: &DiscreteMatrix, members: &[usize], scale: u32) {
    let first = &matrix.codes[members[0]];
    prefix.copy_from_slice(first);
    for &v in &members[1..] {
        let card = matrix.cardinalities[v] as u32;
        for (p, &c) in prefix.iter_mut().zip(&matrix.codes[v]) {
            *p = *p * card + c;
        }
    }
    if scale != 1 {
        for p in prefix.iter_mut() {
            *p *= scale;
        }
    }
}

/// Merges per-shift score lists into elementwise extremes with test counts
/// summed. All lists must cover the same variables in the same order.
pub fn merge_scores(lists: &[Vec<VariableScore>]) -> Result<Vec<VariableScore>, ScanError> {
    let first = lists.first().ok_or(ScanError::EmptyMerge)?;
    let mut merged = first.clone();
    for list in &lists[1..] {
        if list.len() != merged.len() {
            return Err(ScanError::MismatchedVariables);
        }
        for (m, s) in merged.iter_mut().zip(list) {
            if m.variable != s.variable || m.min_chi2_p.is_some() != s.min_chi2_p.is_some() {
                return Err(ScanError::MismatchedVariables);
            }
            m.n_tests += s.n_tests;
            if s.max_cmi > m.max_cmi || (s.max_cmi == m.max_cmi && s.best_tuple < m.best_tuple) {
                m.max_cmi = s.max_cmi;
                m.best_tuple = s.best_tuple.clone();
                m.best_df = s.best_df;
            }
            if let (Some(mp), Some(sp)) = (m.min_chi2_p, s.min_chi2_p) {
                m.min_chi2_p = Some(mp.min(sp));
            }
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(codes: Vec<Vec<u32>>, cards: Vec<usize>, y: Vec<u32>, c_y: usize) -> DiscreteMatrix {
        let n = y.len();
        DiscreteMatrix {
            names: (0..codes.len()).map(|i| format!("x{i}")).collect(),
            codes,
            cardinalities: cards,
            response_codes: y,
            response_cardinality: c_y,
            n_objects: n,
        }
    }

    fn xor_matrix() -> DiscreteMatrix {
        // Four variables; y = x0 XOR x1, x2 copies y, x3 is noise-free junk.
        let mut cols = vec![Vec::new(); 4];
        let mut y = Vec::new();
        for i in 0..16u32 {
            let a = i & 1;
            let b = (i >> 1) & 1;
            cols[0].push(a);
            cols[1].push(b);
            cols[2].push(a ^ b);
            cols[3].push((i >> 2) & 1);
            y.push(a ^ b);
        }
        matrix(cols, vec![2; 4], y, 2)
    }

    #[test]
    fn k1_reduces_to_univariate_mutual_information() {
        let m = xor_matrix();
        let scores = scan_k(&m, 1, &ScanOptions::default()).unwrap();
        assert_eq!(scores.len(), 4);
        // Only the copy variable carries univariate information.
        assert!(scores[0].max_cmi.abs() < 1e-12);
        assert!(scores[1].max_cmi.abs() < 1e-12);
        assert!((scores[2].max_cmi - std::f64::consts::LN_2).abs() < 1e-12);
        for s in &scores {
            assert_eq!(s.n_tests, 1);
            assert_eq!(s.best_tuple, vec![s.variable]);
        }
    }

    #[test]
    fn k2_reveals_the_xor_pair() {
        let m = xor_matrix();
        let scores = scan_k(&m, 2, &ScanOptions::default()).unwrap();
        assert!((scores[0].max_cmi - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(scores[0].best_tuple, vec![0, 1]);
        assert!((scores[1].max_cmi - std::f64::consts::LN_2).abs() < 1e-12);
        for s in &scores {
            assert_eq!(s.n_tests, 3);
        }
    }

    #[test]
    fn worker_counts_agree_bitwise() {
        let m = xor_matrix();
        let base = scan_k(&m, 2, &ScanOptions::default()).unwrap();
        for workers in [1, 2, 8] {
            let opts = ScanOptions {
                workers,
                ..ScanOptions::default()
            };
            assert_eq!(scan_k(&m, 2, &opts).unwrap(), base);
        }
    }

    #[test]
    fn mixed_mode_records_min_p() {
        let mut m = xor_matrix();
        // Make cardinalities genuinely mixed: recode x3 into three levels.
        m.codes[3] = (0..16).map(|i| (i % 3) as u32).collect();
        m.cardinalities[3] = 3;
        assert!(matches!(
            scan_k(
                &m,
                2,
                &ScanOptions {
                    mode: ScanMode::EqualCardinality,
                    ..ScanOptions::default()
                }
            ),
            Err(ScanError::MixedCardinalities(_))
        ));
        let scores = scan_k(
            &m,
            2,
            &ScanOptions {
                mode: ScanMode::Mixed,
                ..ScanOptions::default()
            },
        )
        .unwrap();
        for s in &scores {
            let p = s.min_chi2_p.expect("mixed mode populates p");
            assert!((0.0..=1.0).contains(&p));
        }
        // The deterministic XOR pair drives its p-value far down.
        assert!(scores[0].min_chi2_p.unwrap() < 1e-3);
    }

    #[test]
    fn mixed_and_equal_modes_agree_on_uniform_cardinalities() {
        // With one shared cardinality the recorded minimum p-value must be
        // exactly the p-value of the maximum CMI.
        let m = xor_matrix();
        let equal = scan_k(&m, 2, &ScanOptions::default()).unwrap();
        let mixed = scan_k(
            &m,
            2,
            &ScanOptions {
                mode: ScanMode::Mixed,
                ..ScanOptions::default()
            },
        )
        .unwrap();
        for (e, x) in equal.iter().zip(&mixed) {
            assert_eq!(e.max_cmi, x.max_cmi);
            assert_eq!(e.best_tuple, x.best_tuple);
            let p_equal = crate::calibrate::pmin_from_score(e, m.n_objects).unwrap();
            let p_mixed = crate::calibrate::pmin_from_score(x, m.n_objects).unwrap();
            assert_eq!(p_equal, p_mixed);
        }
    }

    #[test]
    fn merge_takes_elementwise_extremes() {
        let m = xor_matrix();
        let a = scan_k(&m, 2, &ScanOptions::default()).unwrap();
        let merged = merge_scores(std::slice::from_ref(&a)).unwrap();
        assert_eq!(merged, a);

        let mut b = a.clone();
        b[0].max_cmi = 99.0;
        b[0].best_tuple = vec![0, 3];
        b[0].best_df = 7;
        let merged = merge_scores(&[a.clone(), b]).unwrap();
        assert_eq!(merged[0].max_cmi, 99.0);
        assert_eq!(merged[0].best_tuple, vec![0, 3]);
        assert_eq!(merged[0].n_tests, a[0].n_tests * 2);
        assert_eq!(merged[1].max_cmi, a[1].max_cmi);
    }

    #[test]
    fn merge_rejects_mismatched_lists() {
        let m = xor_matrix();
        let a = scan_k(&m, 1, &ScanOptions::default()).unwrap();
        let mut b = a.clone();
        b.pop();
        assert!(matches!(
            merge_scores(&[a, b]),
            Err(ScanError::MismatchedVariables)
        ));
    }

    #[test]
    fn invalid_k_rejected() {
        let m = xor_matrix();
        assert!(matches!(
            scan_k(&m, 0, &ScanOptions::default()),
            Err(ScanError::KZero)
        ));
        assert!(matches!(
            scan_k(&m, 5, &ScanOptions::default()),
            Err(ScanError::KTooLarge { .. })
        ));
    }

    #[test]
    fn progress_reaches_total() {
        let m = xor_matrix();
        let seen = std::sync::Mutex::new(Vec::new());
        let cb = |done: u64, total: u64| seen.lock().unwrap().push((done, total));
        let opts = ScanOptions {
            progress: Some(&cb),
            progress_stride: 1,
            ..ScanOptions::default()
        };
        scan_k(&m, 2, &opts).unwrap();
        let seen = seen.lock().unwrap();
        assert!(seen.iter().any(|&(d, t)| d == t && t == 6));
    }
}
