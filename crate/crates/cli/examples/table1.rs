//! Benchmark grid checker: runs the selection pipeline over the synthetic
//! dataset for the table cells backing the hard claims, compares per-group
//! found counts against the reference within +-3, and checks the claims
//! themselves. Prints one line per cell and a verdict per seed.
//!
//! Usage: table1 <kmax> <seed> [seed...]

use mdscan_cli::{score_rows, ReportLine, RunConfig};
use mdscan_core::synth::{generate, ResponseKind, SynthConfig};

/// (response, k, reference counts, hard exact claims).
#[allow(clippy::type_complexity)]
fn cells(kmax: usize) -> Vec<(ResponseKind, usize, [usize; 7], Vec<(usize, usize)>)> {
    let mut out = vec![
        (
            ResponseKind::Sphere,
            1,
            [3, 3, 20, 8, 0, 0, 0],
            vec![(1, 3), (2, 3), (3, 20)],
        ),
        (
            ResponseKind::Xor3,
            1,
            [0, 0, 10, 2, 0, 1, 0],
            vec![(1, 0), (2, 0)],
        ),
        (
            ResponseKind::Xor3,
            2,
            [3, 3, 20, 20, 3, 1, 1],
            vec![(1, 3), (2, 3), (3, 20), (4, 20)],
        ),
        (
            ResponseKind::Random,
            1,
            [0; 7],
            (1..=7).map(|g| (g, 0)).collect(),
        ),
        (
            ResponseKind::Random,
            2,
            [0; 7],
            (1..=7).map(|g| (g, 0)).collect(),
        ),
    ];
    if kmax >= 3 {
        out.push((
            ResponseKind::Checkerboard,
            3,
            [3, 3, 20, 4, 0, 1, 3],
            vec![(1, 3), (2, 3)],
        ));
        out.push((
            ResponseKind::Random,
            3,
            [0; 7],
            (1..=7).map(|g| (g, 0)).collect(),
        ));
    }
    out
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kmax: usize = args.first().map_or(2, |s| s.parse().unwrap());
    let seeds: Vec<u64> = args[1..].iter().map(|s| s.parse().unwrap()).collect();

    for &seed in &seeds {
        let mut failures = 0usize;
        let mut dataset_cache: Option<(ResponseKind, _, _)> = None;
        for (kind, k, expected, hard) in cells(kmax) {
            if dataset_cache.as_ref().map(|c| c.0) != Some(kind) {
                let config = SynthConfig {
                    response_kind: kind,
                    seed,
                    ..SynthConfig::default()
                };
                let (data, manifest) = generate(&config).unwrap();
                dataset_cache = Some((kind, data, manifest));
            }
            let (_, data, manifest) = dataset_cache.as_ref().unwrap();
            let run_config = RunConfig {
                k,
                seed,
                ..RunConfig::default()
            };
            let started = std::time::Instant::now();
            let output = mdscan_cli::run_dataset(data, &run_config, None).unwrap();
            let rows: Vec<ReportLine> = output
                .report
                .rows
                .iter()
                .map(|r| ReportLine {
                    name: r.name.clone(),
                    relevant: r.relevant,
                    rank: r.rank,
                })
                .collect();
            let summary = score_rows(&rows, manifest).unwrap();
            let counts = summary.found_counts();

            let mut cell_fail = Vec::new();
            for g in 0..7 {
                let lo = expected[g].saturating_sub(3);
                let hi = expected[g] + 3;
                if !(lo..=hi).contains(&counts[g]) {
                    cell_fail.push(format!("G{} {} vs {}±3", g + 1, counts[g], expected[g]));
                }
            }
            for (g, want) in hard {
                if counts[g - 1] != want {
                    cell_fail.push(format!("HARD G{g} {} != {want}", counts[g - 1]));
                }
            }
            if kind == ResponseKind::Xor3 && k == 2 {
                let g1 = summary.group(1);
                let g2 = summary.group(2);
                let g3 = summary.group(3);
                let base_max = g1.ranks.iter().chain(&g2.ranks).max().copied().unwrap();
                if base_max > 30 {
                    cell_fail.push(format!("RANK base worst {base_max} > 30"));
                }
                let g1_best = *g1.ranks.first().unwrap();
                let g3_best = *g3.ranks.first().unwrap();
                if g3_best >= g1_best {
                    cell_fail.push(format!("RANK G3 best {g3_best} !< G1 best {g1_best}"));
                }
            }
            let status = if cell_fail.is_empty() { "ok  " } else { "FAIL" };
            println!(
                "seed={seed:3} {status} {:12} k={k} counts={counts:?} gamma={:.0} ({:.1}s)",
                kind.as_str(),
                output.report.gamma.gamma,
                started.elapsed().as_secs_f64()
            );
            for f in &cell_fail {
                println!("            - {f}");
            }
            failures += cell_fail.len();
        }
        println!(
            "seed={seed:3} VERDICT: {}",
            if failures == 0 {
                "ALL PASS".to_string()
            } else {
                format!("{failures} failures")
            }
        );
    }
}
