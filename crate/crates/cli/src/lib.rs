//! Pipeline orchestration for the `mdscan` binary: ingest, discretize over
//! all shifts, scan, merge, calibrate, select, and serialize. Also the
//! benchmark harness (dataset generation and report scoring against a
//! ground-truth manifest).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mdscan_core::calibrate::{
    build_report, estimate_gamma, CalibrateError, GammaCalibration, GammaConfig, Method,
    SelectionReport,
};
use mdscan_core::dataset::{
    discretize_dataset, ingest, Column, DiscretizationSpec, IngestOptions, NamedColumn,
    RawDataset, VariableWarning,
};
use mdscan_core::scan::{merge_scores, scan_k, ScanMode, ScanOptions};
use mdscan_core::synth::{generate, Manifest, SynthConfig};

pub const CONTRAST_PREFIX: &str = "__contrast_";

/// Everything one selection run needs besides the data itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub response: String,
    pub k: usize,
    pub bins: usize,
    /// Categories for a continuous response; defaults to `bins`.
    pub response_bins: Option<usize>,
    pub n_shifts: usize,
    pub shift_magnitude: f64,
    pub method: Method,
    pub alpha: f64,
    /// 0 lets the runtime decide.
    pub workers: usize,
    pub seed: u64,
    /// Permuted copies of random descriptors appended before the scan and
    /// used only to stabilize the gamma fit.
    pub contrast_copies: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            response: "Y".to_string(),
            k: 1,
            bins: 3,
            response_bins: None,
            n_shifts: 0,
            shift_magnitude: 0.25,
            method: Method::Fdr,
            alpha: 0.1,
            workers: 0,
            seed: 1,
            contrast_copies: 0,
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: SelectionReport,
    /// True when the gamma fit was refused and the conservative fallback
    /// rate (one per test) was applied.
    pub fallback: bool,
    pub dropped_rows: usize,
}

/// Runs the whole pipeline on a delimited file.
pub fn run_file(
    input: &Path,
    config: &RunConfig,
    progress: Option<&(dyn Fn(u64, u64) + Sync)>,
) -> Result<(RunOutput, RawDataset)> {
    let raw = ingest(input, &config.response, &IngestOptions::default())
        .with_context(|| format!("reading {}", input.display()))?;
    let output = run_dataset(&raw, config, progress)?;
    Ok((output, raw))
}

/// Runs the pipeline on an already ingested dataset.
pub fn run_dataset(
    raw: &RawDataset,
    config: &RunConfig,
    progress: Option<&(dyn Fn(u64, u64) + Sync)>,
) -> Result<RunOutput> {
    validate_config(config)?;
    let mut working = raw.clone();
    if config.contrast_copies > 0 {
        append_contrast_columns(&mut working, config.contrast_copies, config.seed);
    }

    let spec = DiscretizationSpec {
        n_categories: config.bins,
        response_categories: config.response_bins.unwrap_or(config.bins),
        n_shifts: config.n_shifts,
        shift_magnitude: config.shift_magnitude,
        seed: config.seed,
    };

    let mut matrices = Vec::with_capacity(config.n_shifts + 1);
    let mut warnings: Vec<VariableWarning> = Vec::new();
    for shift in 0..=config.n_shifts {
        let (matrix, shift_warnings) = discretize_dataset(&working, &spec, shift)?;
        if shift == 0 {
            warnings = shift_warnings;
        } else if matrices
            .first()
            .is_some_and(|m: &mdscan_core::DiscreteMatrix| m.names != matrix.names)
        {
            bail!("shifted discretizations exclude different variables");
        }
        matrices.push(matrix);
    }

    // The max-CMI shortcut is sound only when every (shift, variable) pair
    // shares one cardinality, so the degrees of freedom never vary.
    let mut all_cards: HashSet<usize> = HashSet::new();
    for m in &matrices {
        all_cards.extend(m.cardinalities.iter().copied());
    }
    let mode = if all_cards.len() == 1 {
        ScanMode::EqualCardinality
    } else {
        ScanMode::Mixed
    };

    let n_shift_runs = matrices.len() as u64;
    let per_shift: Vec<_> = matrices
        .iter()
        .enumerate()
        .map(|(shift, matrix)| {
            let offset_cb = progress.map(|cb| {
                move |done: u64, total: u64| {
                    cb(shift as u64 * total + done, n_shift_runs * total)
                }
            });
            let options = ScanOptions {
                mode,
                workers: config.workers,
                progress: offset_cb
                    .as_ref()
                    .map(|cb| cb as &(dyn Fn(u64, u64) + Sync)),
                ..ScanOptions::default()
            };
            scan_k(matrix, config.k, &options)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_scores(&per_shift)?;

    let n_objects = working.n_objects;
    let n_tests = merged.iter().map(|s| s.n_tests).max().unwrap_or(1);
    let p_mins = merged
        .iter()
        .map(|s| mdscan_core::pmin_from_score(s, n_objects))
        .collect::<Result<Vec<_>, _>>()?;

    let gamma_config = GammaConfig {
        alpha: config.alpha,
        n_tests: Some(n_tests),
        ..GammaConfig::default()
    };
    let (calibration, fallback) = match estimate_gamma(&p_mins, &gamma_config) {
        Ok(fit) => (GammaCalibration::from_fit(fit), false),
        Err(CalibrateError::TooFewValues(_) | CalibrateError::FitRefused { .. }) => {
            warnings.push(VariableWarning {
                name: "(gamma)".to_string(),
                reason: format!(
                    "exponential fit refused; falling back to gamma = n_tests = {n_tests}"
                ),
            });
            (GammaCalibration::fallback(n_tests, &p_mins), true)
        }
        Err(e) => return Err(e.into()),
    };

    // Contrast columns feed the fit above but never the selection below.
    let names = &matrices[0].names;
    let selectable: Vec<_> = merged
        .into_iter()
        .filter(|s| !names[s.variable].starts_with(CONTRAST_PREFIX))
        .collect();

    let report = build_report(
        names,
        &selectable,
        n_objects,
        config.k,
        calibration,
        config.method,
        config.alpha,
        warnings,
    )?;

    Ok(RunOutput {
        report,
        fallback,
        dropped_rows: raw.dropped_rows,
    })
}

fn validate_config(config: &RunConfig) -> Result<()> {
    if config.k == 0 {
        bail!("k must be at least 1");
    }
    if config.bins < 2 || config.response_bins.is_some_and(|b| b < 2) {
        bail!("bins must be at least 2");
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        bail!("alpha must lie strictly between 0 and 1");
    }
    if !(0.0..0.5).contains(&config.shift_magnitude) {
        bail!("shift magnitude must lie in [0, 0.5)");
    }
    Ok(())
}

/// Appends permuted copies of randomly chosen descriptors. A permuted
/// column keeps its marginal distribution but loses any association with
/// the response, making it a known-null reference for the gamma fit.
fn append_contrast_columns(dataset: &mut RawDataset, copies: usize, seed: u64) {
    let n_sources = dataset.descriptors.len();
    for c in 0..copies {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x636f6e74 + c as u64); // per-copy stream
        let source = rng.random_range(0..n_sources);
        let mut order: Vec<usize> = (0..dataset.n_objects).collect();
        order.shuffle(&mut rng);
        let data = match &dataset.descriptors[source].data {
            Column::Continuous(v) => {
                Column::Continuous(order.iter().map(|&i| v[i]).collect())
            }
            Column::Categorical(v) => {
                Column::Categorical(order.iter().map(|&i| v[i].clone()).collect())
            }
        };
        dataset.descriptors.push(NamedColumn {
            name: format!("{CONTRAST_PREFIX}{c:03}"),
            data,
        });
    }
}

/// Formats with six significant digits, plain decimal in mid range and
/// scientific notation outside it, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let mut s = format!("{x:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "name",
    "group",
    "max_cmi_nats",
    "best_tuple",
    "p_min",
    "final_p",
    "adjusted_p",
    "relevant",
    "rank",
];

/// Writes the per-variable report as TSV with fixed columns. The group
/// column is present for downstream joins but filled only by tooling that
/// knows the ground truth.
pub fn write_report_tsv(report: &SelectionReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "{}", REPORT_COLUMNS.join("\t"))?;
    for row in &report.rows {
        writeln!(
            w,
            "{}\t\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.name,
            format_sig(row.max_cmi),
            row.best_tuple.join(","),
            format_sig(row.p_min),
            format_sig(row.final_p),
            format_sig(row.adjusted_p),
            row.relevant,
            row.rank,
        )?;
    }
    Ok(())
}

/// Probability-probability plot points for the retained null values.
pub fn write_pp_tsv(report: &SelectionReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "p_min\tempirical_cdf\tmodel_cdf")?;
    for point in &report.pp_points {
        writeln!(
            w,
            "{}\t{}\t{}",
            format_sig(point.p_min),
            format_sig(point.empirical_cdf),
            format_sig(point.model_cdf),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    k: usize,
    method: Method,
    alpha: f64,
    n_objects: usize,
    n_variables: usize,
    n_tests: u64,
    gamma: &'a GammaCalibration,
    fallback: bool,
    n_relevant: usize,
    relevant: Vec<&'a str>,
    warnings: &'a [VariableWarning],
    dropped_rows: usize,
}

pub fn write_json_summary(output: &RunOutput, w: impl Write) -> Result<()> {
    let report = &output.report;
    let relevant: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.relevant)
        .map(|r| r.name.as_str())
        .collect();
    let summary = JsonSummary {
        k: report.k,
        method: report.method,
        alpha: report.alpha,
        n_objects: report.n_objects,
        n_variables: report.n_variables,
        n_tests: report.n_tests,
        gamma: &report.gamma,
        fallback: output.fallback,
        n_relevant: relevant.len(),
        relevant,
        warnings: &report.warnings,
        dropped_rows: output.dropped_rows,
    };
    serde_json::to_writer_pretty(w, &summary)?;
    Ok(())
}

/// Writes the selected descriptor columns plus the response as CSV, for
/// external model building.
pub fn export_selected(raw: &RawDataset, report: &SelectionReport, path: &Path) -> Result<()> {
    let selected: HashSet<&str> = report
        .rows
        .iter()
        .filter(|r| r.relevant)
        .map(|r| r.name.as_str())
        .collect();
    let reduced = RawDataset {
        descriptors: raw
            .descriptors
            .iter()
            .filter(|c| selected.contains(c.name.as_str()))
            .cloned()
            .collect(),
        response: raw.response.clone(),
        n_objects: raw.n_objects,
        dropped_rows: raw.dropped_rows,
    };
    mdscan_core::dataset::write_csv(&reduced, path)?;
    Ok(())
}

/// Writes the synthetic dataset and its manifest; returns both paths.
pub fn bench_generate(config: &SynthConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)?;
    let (dataset, manifest) = generate(config)?;
    let kind = config.response_kind.as_str();
    let data_path = out_dir.join(format!("{kind}.csv"));
    let manifest_path = out_dir.join(format!("{kind}.manifest.json"));
    mdscan_core::dataset::write_csv(&dataset, &data_path)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(&manifest_path)?), &manifest)?;
    Ok((data_path, manifest_path))
}

/// Per-group selection outcome joined from a report and its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupScore {
    pub group: u8,
    pub n_variables: usize,
    pub n_found: usize,
    /// Ranks of the group members, ascending.
    pub ranks: Vec<usize>,
}

impl GroupScore {
    /// Rank summary in the benchmark-table style: every rank for the base
    /// groups, extremes for the combination and nuisance groups, the best
    /// rank for the irrelevant groups.
    pub fn rank_summary(&self) -> String {
        let fmt = |r: &usize| r.to_string();
        match self.group {
            1 | 2 => self.ranks.iter().map(fmt).collect::<Vec<_>>().join(" "),
            3..=5 => match (self.ranks.first(), self.ranks.last()) {
                (Some(lo), Some(hi)) => format!("{lo} {hi}"),
                _ => String::new(),
            },
            _ => self.ranks.first().map(fmt).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    pub groups: Vec<GroupScore>,
}

impl ScoreSummary {
    pub fn found_counts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.n_found).collect()
    }

    pub fn group(&self, group: u8) -> &GroupScore {
        self.groups
            .iter()
            .find(|g| g.group == group)
            .expect("groups 1..=7 always present")
    }
}

/// One parsed line of a report TSV.
#[derive(Debug, Clone)]
pub struct ReportLine {
    pub name: String,
    pub relevant: bool,
    pub rank: usize,
}

pub fn parse_report_tsv(path: &Path) -> Result<Vec<ReportLine>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().context("report is empty")??;
    let columns: Vec<&str> = header.split('\t').collect();
    let idx = |name: &str| {
        columns
            .iter()
            .position(|&c| c == name)
            .with_context(|| format!("report missing column '{name}'"))
    };
    let (name_i, relevant_i, rank_i) = (idx("name")?, idx("relevant")?, idx("rank")?);
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        out.push(ReportLine {
            name: fields[name_i].to_string(),
            relevant: fields[relevant_i].parse().context("relevant flag")?,
            rank: fields[rank_i].parse().context("rank")?,
        });
    }
    Ok(out)
}

/// Joins a selection report with the generator manifest into per-group
/// found counts and rank summaries.
pub fn bench_score(report_path: &Path, manifest_path: &Path) -> Result<ScoreSummary> {
    let report = parse_report_tsv(report_path)?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
    score_rows(&report, &manifest)
}

pub fn score_rows(rows: &[ReportLine], manifest: &Manifest) -> Result<ScoreSummary> {
    let mut groups: Vec<GroupScore> = (1..=7)
        .map(|g| GroupScore {
            group: g,
            n_variables: 0,
            n_found: 0,
            ranks: Vec::new(),
        })
        .collect();
    for column in &manifest.columns {
        if !(1..=7).contains(&column.group) {
            bail!("manifest group {} out of range", column.group);
        }
        let entry = &mut groups[column.group as usize - 1];
        entry.n_variables += 1;
        let row = rows
            .iter()
            .find(|r| r.name == column.name)
            .with_context(|| format!("report lacks manifest column '{}'", column.name))?;
        entry.ranks.push(row.rank);
        if row.relevant {
            entry.n_found += 1;
        }
    }
    for g in groups.iter_mut() {
        g.ranks.sort_unstable();
    }
    Ok(ScoreSummary { groups })
}

pub fn write_score_tsv(summary: &ScoreSummary, mut w: impl Write) -> Result<()> {
    writeln!(w, "group\tn_variables\tn_found\trank_summary")?;
    for g in &summary.groups {
        writeln!(
            w,
            "G{}\t{}\t{}\t{}",
            g.group,
            g.n_variables,
            g.n_found,
            g.rank_summary()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.6931471805599453), "0.693147");
        assert_eq!(format_sig(5.30804476241e-32), "5.30804e-32");
        assert_eq!(format_sig(138.62943611198907), "138.629");
        assert_eq!(format_sig(0.05), "0.05");
        assert_eq!(format_sig(-0.0001234567), "-0.000123457");
        assert_eq!(format_sig(1234567.0), "1.23457e6");
        assert_eq!(format_sig(0.1), "0.1");
    }

    #[test]
    fn perfect_selector_scores_cleanly() {
        use mdscan_core::synth::{generate, ResponseKind, SynthConfig};
        let (_, manifest) = generate(&SynthConfig {
            n_objects: 50,
            response_kind: ResponseKind::Sphere,
            ..SynthConfig::default()
        })
        .unwrap();
        // A selector that flags exactly groups 1-5, ranked in manifest order.
        let rows: Vec<ReportLine> = manifest
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| ReportLine {
                name: c.name.clone(),
                relevant: c.group <= 5,
                rank: i + 1,
            })
            .collect();
        let summary = score_rows(&rows, &manifest).unwrap();
        assert_eq!(summary.found_counts(), vec![3, 3, 20, 20, 5, 0, 0]);
        assert_eq!(summary.group(1).ranks.len(), 3);
        assert_eq!(summary.group(1).rank_summary(), "1 2 3");
        assert_eq!(summary.group(3).rank_summary(), "7 26");
        assert_eq!(summary.group(6).rank_summary(), "52");
    }

    #[test]
    fn contrast_columns_are_appended_and_permuted() {
        use mdscan_core::dataset::{Column, NamedColumn};
        let mut ds = RawDataset {
            descriptors: vec![NamedColumn {
                name: "a".into(),
                data: Column::Continuous((0..50).map(f64::from).collect()),
            }],
            response: NamedColumn {
                name: "Y".into(),
                data: Column::Continuous(vec![0.0; 50]),
            },
            n_objects: 50,
            dropped_rows: 0,
        };
        append_contrast_columns(&mut ds, 2, 9);
        assert_eq!(ds.descriptors.len(), 3);
        assert!(ds.descriptors[1].name.starts_with(CONTRAST_PREFIX));
        let (orig, copy) = match (&ds.descriptors[0].data, &ds.descriptors[1].data) {
            (Column::Continuous(a), Column::Continuous(b)) => (a, b),
            _ => panic!("continuous"),
        };
        let mut sorted = copy.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(&sorted, orig, "permutation preserves the multiset");
        assert_ne!(copy, orig, "but changes the order");
    }
}
