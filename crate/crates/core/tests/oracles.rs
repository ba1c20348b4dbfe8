//! Cross-checks of the production code paths against independent
//! implementations: hashmap-based entropies for the chain rule, exhaustive
//! enumeration for the discretizer, and the asymptotic chi-squared law for
//! the null distribution of the scaled CMI.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use mdscan_core::dataset::DiscreteMatrix;
use mdscan_core::{build_contingency, conditional_mutual_information, discretize_equipotent};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, cards: &[usize], c_y: usize) -> DiscreteMatrix {
    let codes: Vec<Vec<u32>> = cards
        .iter()
        .map(|&c| (0..n).map(|_| rng.random_range(0..c as u32)).collect())
        .collect();
    DiscreteMatrix {
        names: (0..cards.len()).map(|i| format!("x{i}")).collect(),
        codes,
        cardinalities: cards.to_vec(),
        response_codes: (0..n).map(|_| rng.random_range(0..c_y as u32)).collect(),
        response_cardinality: c_y,
        n_objects: n,
    }
}

/// Plug-in entropy from raw per-object keys, independent of the
/// contingency-table machinery.
fn entropy_of_keys(keys: &[Vec<u32>]) -> f64 {
    let mut counts: HashMap<&[u32], usize> = HashMap::new();
    for key in keys {
        *counts.entry(key.as_slice()).or_insert(0) += 1;
    }
    let n = keys.len() as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mutual information between the response and a joint key built from the
/// given variables, straight from entropy sums.
fn mi_of(matrix: &DiscreteMatrix, vars: &[usize]) -> f64 {
    let n = matrix.n_objects;
    let joint: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            let mut key: Vec<u32> = vars.iter().map(|&v| matrix.codes[v][i]).collect();
            key.push(u32::MAX); // separator slot reused below
            key
        })
        .collect();
    let mut with_y = joint.clone();
    for (i, key) in with_y.iter_mut().enumerate() {
        *key.last_mut().unwrap() = matrix.response_codes[i];
    }
    let vars_only: Vec<Vec<u32>> = joint
        .iter()
        .map(|k| k[..k.len() - 1].to_vec())
        .collect();
    let y_only: Vec<Vec<u32>> = matrix.response_codes.iter().map(|&y| vec![y]).collect();
    entropy_of_keys(&vars_only) + entropy_of_keys(&y_only) - entropy_of_keys(&with_y)
}

#[test]
fn chain_rule_identity_on_random_tables() {
    // I(Y; X | S) must equal I(Y; X,S) - I(Y; S), both sides from raw
    // entropy sums, on 200 random tables up to 3x3x3 with binary or
    // ternary response.
    let mut rng = ChaCha8Rng::seed_from_u64(20240915);
    for trial in 0..200 {
        let k = rng.random_range(1..=3usize);
        let cards: Vec<usize> = (0..k).map(|_| rng.random_range(2..=3usize)).collect();
        let c_y = rng.random_range(2..=3usize);
        let n = rng.random_range(20..=60usize);
        let matrix = random_matrix(&mut rng, n, &cards, c_y);

        let tuple: Vec<usize> = (0..k).collect();
        let table = build_contingency(&matrix, &tuple).unwrap();
        for member in 0..k {
            let (cmi, _) = conditional_mutual_information(&table, member).unwrap();
            let rest: Vec<usize> = tuple.iter().copied().filter(|&v| v != member).collect();
            let expected = mi_of(&matrix, &tuple) - mi_of(&matrix, &rest);
            assert!(
                (cmi - expected.max(0.0)).abs() < 1e-10,
                "trial {trial} member {member}: {cmi} vs {expected}"
            );
        }
    }
}

/// All tie-respecting partitions into at most `c` contiguous non-empty
/// groups, scored by the exact integer objective max |c * size - n|;
/// returns (best objective, largest group count achieving it).
fn brute_force_best(run_lengths: &[usize], c: usize) -> (i64, usize) {
    let d = run_lengths.len();
    let n: usize = run_lengths.iter().sum();
    let mut best: Option<(i64, usize)> = None;
    // Enumerate boundary subsets by bitmask over the d-1 internal gaps.
    for mask in 0..(1u32 << (d - 1)) {
        let groups = mask.count_ones() as usize + 1;
        if groups > c {
            continue;
        }
        let mut objective: i64 = 0;
        let mut size: i64 = 0;
        for (i, &len) in run_lengths.iter().enumerate() {
            size += len as i64;
            let closes = i == d - 1 || mask & (1 << i) != 0;
            if closes {
                objective = objective.max((c as i64 * size - n as i64).abs());
                size = 0;
            }
        }
        let better = match best {
            None => true,
            Some((obj, g)) => objective < obj || (objective == obj && groups > g),
        };
        if better {
            best = Some((objective, groups));
        }
    }
    best.unwrap()
}

#[test]
fn discretizer_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7171);
    for trial in 0..500 {
        let n = rng.random_range(4..=16usize);
        let c = rng.random_range(2..=4usize);
        let alphabet = rng.random_range(2..=6usize);
        let values: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..alphabet) as f64)
            .collect();

        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut run_lengths = Vec::new();
        let mut run = 1;
        for w in 1..n {
            if sorted[w] == sorted[w - 1] {
                run += 1;
            } else {
                run_lengths.push(run);
                run = 1;
            }
        }
        run_lengths.push(run);
        if run_lengths.len() < 2 {
            continue; // degenerate column
        }

        let (codes, card) = discretize_equipotent(&values, c).unwrap();
        let mut pops = vec![0i64; card];
        for &code in &codes {
            pops[code as usize] += 1;
        }
        let achieved = pops
            .iter()
            .map(|&p| (c as i64 * p - n as i64).abs())
            .max()
            .unwrap();

        let (expected_obj, expected_groups) = brute_force_best(&run_lengths, c);
        assert_eq!(
            achieved, expected_obj,
            "trial {trial}: values {values:?} c {c} pops {pops:?}"
        );
        assert_eq!(
            card, expected_groups,
            "trial {trial}: values {values:?} c {c} pops {pops:?}"
        );
    }
}

fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i as f64 + 1.0) / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn null_cmi_follows_chi_squared() {
    // Independent uniform Y (binary), X (ternary), S (ternary): the scaled
    // statistic 2N I(Y;X|S) should match chi-squared with df = 6.
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let n = 2000;
    let replicates = 400;
    let mut stats = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let matrix = random_matrix(&mut rng, n, &[3, 3], 2);
        let table = build_contingency(&matrix, &[0, 1]).unwrap();
        let (cmi, df) = conditional_mutual_information(&table, 0).unwrap();
        assert_eq!(df, 6);
        stats.push(2.0 * n as f64 * cmi);
    }
    let dist = ChiSquared::new(6.0).unwrap();
    let d = ks_statistic(&mut stats, |x| dist.cdf(x));
    // 0.1% critical value for 400 samples.
    let critical = 1.94947 / (replicates as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
}
