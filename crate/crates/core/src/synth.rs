//! Synthetic benchmark generator: seven groups of descriptor columns with a
//! known ground truth, four response functions over the three base
//! variables, and the small fixtures used by the tests.
//!
//! Every column draws from its own ChaCha stream keyed by a fixed stream id
//! plus the dataset seed, so regeneration is bit-identical and independent
//! of generation order; the random response uses a stream of its own and is
//! independent of every descriptor by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Column, NamedColumn, RawDataset};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("response '{0}' needs at least 3 base variables in group 1")]
    NotEnoughBaseVariables(String),
    #[error("group sizes produce an empty dataset")]
    EmptyConfig,
    #[error("invalid group sizes: {0}")]
    InvalidGroupSizes(&'static str),
    #[error("n_objects must be positive")]
    NoObjects,
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
}

/// Binary response functions over the first three base variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    /// Y = (X1^2 + X2^2 + X3^2 > 0.9)
    Sphere,
    /// Y = (X1 * X2 * X3 < 0)
    Xor3,
    /// Y = (sin(2 pi X1) * sin(2 pi X2) * sin(2 pi X3) < 0)
    Checkerboard,
    /// Y independent of every descriptor.
    Random,
}

impl ResponseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseKind::Sphere => "sphere",
            ResponseKind::Xor3 => "xor3",
            ResponseKind::Checkerboard => "checkerboard",
            ResponseKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<ResponseKind> {
        match s {
            "sphere" => Some(ResponseKind::Sphere),
            "xor3" => Some(ResponseKind::Xor3),
            "checkerboard" => Some(ResponseKind::Checkerboard),
            "random" => Some(ResponseKind::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_objects: usize,
    /// Sizes of groups 1..=7.
    pub group_sizes: [usize; 7],
    pub noise_amplitude: f64,
    pub response_kind: ResponseKind,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_objects: 5000,
            group_sizes: [3, 3, 20, 20, 5, 100, 200],
            noise_amplitude: 0.15,
            response_kind: ResponseKind::Sphere,
            seed: 1,
        }
    }
}

/// Ground truth for scoring a selection report against the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_objects: usize,
    pub group_sizes: Vec<usize>,
    pub noise_amplitude: f64,
    pub response_kind: String,
    pub response_name: String,
    /// How group 4 mixes base and nuisance variables.
    pub g4_construction: String,
    pub columns: Vec<ManifestColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestColumn {
    pub name: String,
    /// Group 1..=7.
    pub group: u8,
}

// Stream id layout for the per-column substreams.
const STREAM_G1: u64 = 0;
const STREAM_G2_NOISE: u64 = 100;
const STREAM_G5: u64 = 200;
const STREAM_G6: u64 = 300;
const STREAM_G3_COEFF: u64 = 1_000;
const STREAM_G4_COEFF: u64 = 2_000;
const STREAM_G7_COEFF: u64 = 3_000;
const STREAM_G4_NOISE: u64 = 4_000;
const STREAM_G7_NOISE: u64 = 5_000;
const STREAM_RESPONSE: u64 = 9_000;

/// Relative weight of the nuisance mixture inside a group-4 column.
/// Calibrated so the univariate pass detects roughly the benchmark's
/// share of group 4 while the pairwise pass still detects all of it.
const G4_NUISANCE_SCALE: f64 = 1.3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_column(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Rescales to unit population standard deviation so additive noise has the
/// same relative weight for every combination column.
fn to_unit_std(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    assert!(std > 0.0, "combination column is constant");
    for v in values.iter_mut() {
        *v /= std;
    }
}

/// Generates the benchmark dataset and its ground-truth manifest.
pub fn generate(config: &SynthConfig) -> Result<(RawDataset, Manifest), SynthError> {
    if config.n_objects == 0 {
        return Err(SynthError::NoObjects);
    }
    let total: usize = config.group_sizes.iter().sum();
    if total == 0 {
        return Err(SynthError::EmptyConfig);
    }
    if config.group_sizes[0] < 3 && config.response_kind != ResponseKind::Random {
        return Err(SynthError::NotEnoughBaseVariables(
            config.response_kind.as_str().to_string(),
        ));
    }
    let n = config.n_objects;
    let seed = config.seed;
    let amp = config.noise_amplitude;
    let [g1, g2, g3, g4, g5, g6, g7] = config.group_sizes;
    if g2 > g1 {
        return Err(SynthError::InvalidGroupSizes(
            "group 2 copies group 1, so it cannot be larger",
        ));
    }
    if (g3 > 0 || g4 > 0) && g1 == 0 {
        return Err(SynthError::InvalidGroupSizes(
            "groups 3 and 4 combine group-1 variables",
        ));
    }
    if g4 > 0 && g5 == 0 {
        return Err(SynthError::InvalidGroupSizes(
            "group 4 mixes in group-5 variables",
        ));
    }
    if g7 > 0 && g6 == 0 {
        return Err(SynthError::InvalidGroupSizes(
            "group 7 combines group-6 variables",
        ));
    }

    let base: Vec<Vec<f64>> = (0..g1)
        .map(|i| uniform_column(&mut stream_rng(seed, STREAM_G1 + i as u64), n, -1.0, 1.0))
        .collect();
    let nuisance: Vec<Vec<f64>> = (0..g5)
        .map(|i| uniform_column(&mut stream_rng(seed, STREAM_G5 + i as u64), n, -1.0, 1.0))
        .collect();
    let random_vars: Vec<Vec<f64>> = (0..g6)
        .map(|i| uniform_column(&mut stream_rng(seed, STREAM_G6 + i as u64), n, -1.0, 1.0))
        .collect();

    let mut columns: Vec<NamedColumn> = Vec::with_capacity(total);
    let mut groups: Vec<u8> = Vec::with_capacity(total);
    macro_rules! add {
        ($name:expr, $values:expr, $group:expr) => {{
            columns.push(NamedColumn {
                name: $name,
                data: Column::Continuous($values),
            });
            groups.push($group);
        }};
    }

    for (i, col) in base.iter().enumerate() {
        add!(format!("g1_{i:02}"), col.clone(), 1);
    }
    for (i, col) in base.iter().enumerate().take(g2) {
        let mut rng = stream_rng(seed, STREAM_G2_NOISE + i as u64);
        let noisy = col
            .iter()
            .map(|&v| v + rng.random_range(-amp..amp))
            .collect();
        add!(format!("g2_{i:02}"), noisy, 2);
    }
    for j in 0..g3 {
        let mut rng = stream_rng(seed, STREAM_G3_COEFF + j as u64);
        let coeffs: Vec<f64> = (0..g1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = combine(&base, &coeffs, n);
        to_unit_std(&mut col);
        add!(format!("g3_{j:02}"), col, 3);
    }
    for j in 0..g4 {
        // Base and nuisance variables enter the combination on the same
        // footing, then 15% noise is added on top of the unit-width column.
        let mut rng = stream_rng(seed, STREAM_G4_COEFF + j as u64);
        let coeffs_base: Vec<f64> = (0..g1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs_nuisance: Vec<f64> = (0..g5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = combine(&base, &coeffs_base, n);
        let nuisance_part = combine(&nuisance, &coeffs_nuisance, n);
        for (c, p) in col.iter_mut().zip(&nuisance_part) {
            *c += G4_NUISANCE_SCALE * p;
        }
        to_unit_std(&mut col);
        let mut noise_rng = stream_rng(seed, STREAM_G4_NOISE + j as u64);
        for c in col.iter_mut() {
            *c += noise_rng.random_range(-amp..amp);
        }
        add!(format!("g4_{j:02}"), col, 4);
    }
    for (i, col) in nuisance.iter().enumerate() {
        add!(format!("g5_{i:02}"), col.clone(), 5);
    }
    for (i, col) in random_vars.iter().enumerate() {
        add!(format!("g6_{i:02}"), col.clone(), 6);
    }
    for j in 0..g7 {
        let mut rng = stream_rng(seed, STREAM_G7_COEFF + j as u64);
        let picks = rand::seq::index::sample(&mut rng, g6, 10.min(g6)).into_vec();
        let coeffs: Vec<f64> = picks.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = vec![0.0; n];
        for (&p, &c) in picks.iter().zip(&coeffs) {
            for (acc, &v) in col.iter_mut().zip(&random_vars[p]) {
                *acc += c * v;
            }
        }
        to_unit_std(&mut col);
        let mut noise_rng = stream_rng(seed, STREAM_G7_NOISE + j as u64);
        for c in col.iter_mut() {
            *c += noise_rng.random_range(-amp..amp);
        }
        add!(format!("g7_{j:03}"), col, 7);
    }

    let response_values: Vec<f64> = match config.response_kind {
        ResponseKind::Sphere => (0..n)
            .map(|i| {
                let s = base[0][i] * base[0][i] + base[1][i] * base[1][i] + base[2][i] * base[2][i];
                (s > 0.9) as u8 as f64
            })
            .collect(),
        ResponseKind::Xor3 => (0..n)
            .map(|i| ((base[0][i] * base[1][i] * base[2][i]) < 0.0) as u8 as f64)
            .collect(),
        ResponseKind::Checkerboard => (0..n)
            .map(|i| {
                let tau = 2.0 * std::f64::consts::PI;
                let s = (tau * base[0][i]).sin() * (tau * base[1][i]).sin()
                    * (tau * base[2][i]).sin();
                (s < 0.0) as u8 as f64
            })
            .collect(),
        ResponseKind::Random => {
            let mut rng = stream_rng(seed, STREAM_RESPONSE);
            (0..n).map(|_| rng.random_range(0..2) as f64).collect()
        }
    };

    let manifest = Manifest {
        seed,
        n_objects: n,
        group_sizes: config.group_sizes.to_vec(),
        noise_amplitude: amp,
        response_kind: config.response_kind.as_str().to_string(),
        response_name: "Y".to_string(),
        g4_construction: "base and nuisance combined with iid U(-1,1) coefficients, \
                          unit-std rescale, additive noise"
            .to_string(),
        columns: columns
            .iter()
            .zip(&groups)
            .map(|(c, &g)| ManifestColumn {
                name: c.name.clone(),
                group: g,
            })
            .collect(),
    };

    Ok((
        RawDataset {
            descriptors: columns,
            response: NamedColumn {
                name: "Y".to_string(),
                data: Column::Continuous(response_values),
            },
            n_objects: n,
            dropped_rows: 0,
        },
        manifest,
    ))
}

fn combine(sources: &[Vec<f64>], coeffs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (src, &c) in sources.iter().zip(coeffs) {
        for (acc, &v) in out.iter_mut().zip(src) {
            *acc += c * v;
        }
    }
    out
}

const FIXTURE_N: usize = 400;

/// Small deterministic datasets reproducing the appendix interaction
/// examples. Known names: `pure_synergy`, `epistasis_correlated`,
/// `epistasis_exact`, `nuisance`, `strength_vs_importance`.
pub fn fixture(name: &str, seed: u64) -> Result<RawDataset, SynthError> {
    match name {
        "pure_synergy" => Ok(pure_synergy(seed)),
        "epistasis_correlated" => Ok(epistasis_correlated(seed)),
        "epistasis_exact" => Ok(epistasis_exact()),
        "nuisance" => Ok(nuisance_fixture(seed)),
        "strength_vs_importance" => Ok(strength_vs_importance(seed)),
        other => Err(SynthError::UnknownFixture(other.to_string())),
    }
}

fn binary_dataset(columns: Vec<(String, Vec<u8>)>, response: Vec<f64>) -> RawDataset {
    let n = response.len();
    RawDataset {
        descriptors: columns
            .into_iter()
            .map(|(name, vals)| NamedColumn {
                name,
                data: Column::Continuous(vals.into_iter().map(f64::from).collect()),
            })
            .collect(),
        response: NamedColumn {
            name: "Y".to_string(),
            data: Column::Continuous(response),
        },
        n_objects: n,
        dropped_rows: 0,
    }
}

/// Indicator plus uniform noise on the unit interval. The equipotent
/// response split then lands inside the indicator-0 noise band, so part of
/// that mass flips up: the association weakens without becoming exact,
/// which keeps p-values off zero.
fn noisy_indicator(indicator: u8, noise: &mut ChaCha8Rng) -> f64 {
    f64::from(indicator) + noise.random_range(0.0..1.0)
}

/// Y tracks agreement of two independent fair bits, plus noise: neither
/// variable is informative alone, both are in a pair.
fn pure_synergy(seed: u64) -> RawDataset {
    let mut rng = stream_rng(seed, 0);
    let mut noise = stream_rng(seed, 9_001);
    let mut x1 = Vec::with_capacity(FIXTURE_N);
    let mut x2 = Vec::with_capacity(FIXTURE_N);
    let mut y = Vec::with_capacity(FIXTURE_N);
    for _ in 0..FIXTURE_N {
        let a: u8 = rng.random_range(0..2);
        let b: u8 = rng.random_range(0..2);
        x1.push(a);
        x2.push(b);
        y.push(noisy_indicator((a == b) as u8, &mut noise));
    }
    binary_dataset(vec![("X1".into(), x1), ("X2".into(), x2)], y)
}

/// Correlated pair with joint frequencies 1/3, 1/6, 1/6, 1/3 and
/// Y = (X1 AND X2) plus noise.
fn epistasis_correlated(seed: u64) -> RawDataset {
    let mut rng = stream_rng(seed, 0);
    let mut noise = stream_rng(seed, 9_001);
    let mut x1 = Vec::with_capacity(FIXTURE_N);
    let mut x2 = Vec::with_capacity(FIXTURE_N);
    let mut y = Vec::with_capacity(FIXTURE_N);
    for _ in 0..FIXTURE_N {
        let u = rng.random_range(0.0..1.0);
        let (a, b) = if u < 1.0 / 3.0 {
            (0, 0)
        } else if u < 0.5 {
            (0, 1)
        } else if u < 2.0 / 3.0 {
            (1, 0)
        } else {
            (1, 1)
        };
        x1.push(a);
        x2.push(b);
        y.push(noisy_indicator(a & b, &mut noise));
    }
    binary_dataset(vec![("X1".into(), x1), ("X2".into(), x2)], y)
}

/// The correlated AND example at exact proportions: joint cell counts in
/// ratio 4:2:2:4 per 12 objects, Y = X1 AND X2 with no noise.
fn epistasis_exact() -> RawDataset {
    // 12 objects per block; 33 blocks stay closest to the 400-object default.
    let repeats = FIXTURE_N / 12;
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut y = Vec::new();
    for _ in 0..repeats.max(1) {
        for (a, b, count) in [(0u8, 0u8, 4), (0, 1, 2), (1, 0, 2), (1, 1, 4)] {
            for _ in 0..count {
                x1.push(a);
                x2.push(b);
                y.push(f64::from(a & b));
            }
        }
    }
    binary_dataset(vec![("X1".into(), x1), ("X2".into(), x2)], y)
}

/// X3 mixes X1 and X2 half-and-half; Y tracks X1 plus noise. X2 is a
/// nuisance variable: uninformative alone, informative given X3.
fn nuisance_fixture(seed: u64) -> RawDataset {
    let mut rng = stream_rng(seed, 0);
    let mut noise = stream_rng(seed, 9_001);
    let mut x1 = Vec::with_capacity(FIXTURE_N);
    let mut x2 = Vec::with_capacity(FIXTURE_N);
    let mut x3 = Vec::with_capacity(FIXTURE_N);
    let mut y = Vec::with_capacity(FIXTURE_N);
    for _ in 0..FIXTURE_N {
        let a: u8 = rng.random_range(0..2);
        let b: u8 = rng.random_range(0..2);
        let pick_first: bool = rng.random_range(0.0..1.0) < 0.5;
        x1.push(a);
        x2.push(b);
        x3.push(if pick_first { a } else { b });
        y.push(noisy_indicator(a, &mut noise));
    }
    binary_dataset(
        vec![("X1".into(), x1), ("X2".into(), x2), ("X3".into(), x3)],
        y,
    )
}

/// Two driver variables, twenty combinations, fifty random columns, all
/// descriptors distorted with 50% noise; Y fires when both drivers exceed
/// one half.
fn strength_vs_importance(seed: u64) -> RawDataset {
    let n = FIXTURE_N;
    let drivers: Vec<Vec<f64>> = (0..2)
        .map(|i| uniform_column(&mut stream_rng(seed, i as u64), n, 0.0, 1.0))
        .collect();
    let y: Vec<u8> = (0..n)
        .map(|i| (drivers[0][i] > 0.5 && drivers[1][i] > 0.5) as u8)
        .collect();

    let mut columns: Vec<NamedColumn> = Vec::new();
    let mut add_noisy = |name: String, mut values: Vec<f64>, stream: u64| {
        let mut rng = stream_rng(seed, stream);
        for v in values.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        columns.push(NamedColumn {
            name,
            data: Column::Continuous(values),
        });
    };

    add_noisy("X1".into(), drivers[0].clone(), 10_000);
    add_noisy("X2".into(), drivers[1].clone(), 10_001);
    for j in 0..20u64 {
        let mut rng = stream_rng(seed, STREAM_G3_COEFF + j);
        let coeffs: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = combine(&drivers, &coeffs, n);
        to_unit_std(&mut col);
        add_noisy(format!("C{j:02}"), col, 10_100 + j);
    }
    for j in 0..50u64 {
        let col = uniform_column(&mut stream_rng(seed, STREAM_G6 + j), n, 0.0, 1.0);
        add_noisy(format!("R{j:02}"), col, 10_200 + j);
    }

    RawDataset {
        descriptors: columns,
        response: NamedColumn {
            name: "Y".to_string(),
            data: Column::Continuous(y.into_iter().map(f64::from).collect()),
        },
        n_objects: n,
        dropped_rows: 0,
    }
}
