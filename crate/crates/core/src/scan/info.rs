//! Contingency tables over (response x variable tuple) and the plug-in
//! information measures computed from them.
//!
//! The conditional mutual information of a tuple member X given the rest S
//! is assembled from four entropy terms over marginalized counts,
//!
//!   I(Y;X|S) = [H(X,S) - H(Y,X,S)] - [H(S) - H(Y,S)]
//!
//! which is algebraically identical to the ratio form of the plug-in
//! estimator but never divides by an empty cell. Working with raw counts,
//! each entropy term reduces to a sum of n*ln(n) over the marginal table,
//! so a shared x*ln(x) lookup table carries the whole evaluation.

use thiserror::Error;

use crate::dataset::DiscreteMatrix;

/// Hard cap on contingency-table cells, so a high-cardinality categorical
/// column cannot silently demand gigabytes per worker.
pub const MAX_TABLE_CELLS: usize = 1 << 22;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InfoError {
    #[error("tuple index {index} out of range for {n_variables} variables")]
    TupleIndexOutOfRange { index: usize, n_variables: usize },
    #[error("tuple indices must be strictly increasing")]
    TupleNotIncreasing,
    #[error("contingency table would need {cells} cells (limit {limit})")]
    TableTooLarge { cells: u128, limit: usize },
    #[error("member position {position} out of range for a {k}-tuple")]
    MemberOutOfRange { position: usize, k: usize },
    #[error("interaction information requires a 2-variable tuple, got {k}")]
    NotPairTable { k: usize },
    #[error("counts must sum to n_objects ({expected}), got {actual}")]
    CountMismatch { expected: u64, actual: u64 },
    #[error("n_objects must be positive")]
    EmptyTable,
    #[error("dimension mismatch between counts and declared shape")]
    ShapeMismatch,
}

/// Dense joint counts for one variable tuple and the response.
///
/// Layout: the response index varies fastest, then the last tuple member,
/// and so on; `count(y, codes)` hides this from callers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<u32>,
    tuple: Vec<usize>,
    dims: Vec<usize>,
    response_cardinality: usize,
    n_objects: usize,
}

impl ContingencyTable {
    /// Builds a table from pre-tabulated counts; `dims` are the per-member
    /// cardinalities in tuple order.
    pub fn from_counts(
        counts: Vec<u32>,
        tuple: Vec<usize>,
        dims: Vec<usize>,
        response_cardinality: usize,
        n_objects: usize,
    ) -> Result<Self, InfoError> {
        if n_objects == 0 {
            return Err(InfoError::EmptyTable);
        }
        let cells: usize = dims.iter().product::<usize>() * response_cardinality;
        if counts.len() != cells || dims.len() != tuple.len() {
            return Err(InfoError::ShapeMismatch);
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != n_objects as u64 {
            return Err(InfoError::CountMismatch {
                expected: n_objects as u64,
                actual: total,
            });
        }
        Ok(ContingencyTable {
            counts,
            tuple,
            dims,
            response_cardinality,
            n_objects,
        })
    }

    pub fn count(&self, y: usize, codes: &[usize]) -> u32 {
        assert_eq!(codes.len(), self.dims.len());
        let mut idx = 0usize;
        for (&code, &dim) in codes.iter().zip(&self.dims) {
            debug_assert!(code < dim);
            idx = idx * dim + code;
        }
        self.counts[idx * self.response_cardinality + y]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn tuple(&self) -> &[usize] {
        &self.tuple
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn response_cardinality(&self) -> usize {
        self.response_cardinality
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    /// Counts marginalized over the response: one cell per tuple-code combo.
    pub fn tuple_marginal(&self) -> Vec<u32> {
        self.counts
            .chunks_exact(self.response_cardinality)
            .map(|chunk| chunk.iter().sum())
            .collect()
    }

    /// Counts per response category.
    pub fn response_marginal(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.response_cardinality];
        for chunk in self.counts.chunks_exact(self.response_cardinality) {
            for (o, &c) in out.iter_mut().zip(chunk) {
                *o += c;
            }
        }
        out
    }
}

/// Per-member conditional mutual information for one tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleResult {
    pub tuple: Vec<usize>,
    pub cmi_per_member: Vec<f64>,
    pub df_per_member: Vec<u64>,
}

/// Tabulates joint counts for `tuple` against the response in one pass
/// over the objects.
pub fn build_contingency(
    matrix: &DiscreteMatrix,
    tuple: &[usize],
) -> Result<ContingencyTable, InfoError> {
    let n_vars = matrix.codes.len();
    let mut dims = Vec::with_capacity(tuple.len());
    for (pos, &v) in tuple.iter().enumerate() {
        if v >= n_vars {
            return Err(InfoError::TupleIndexOutOfRange {
                index: v,
                n_variables: n_vars,
            });
        }
        if pos > 0 && tuple[pos - 1] >= v {
            return Err(InfoError::TupleNotIncreasing);
        }
        dims.push(matrix.cardinalities[v]);
    }
    let cells: u128 = dims.iter().map(|&d| d as u128).product::<u128>()
        * matrix.response_cardinality as u128;
    if cells > MAX_TABLE_CELLS as u128 {
        return Err(InfoError::TableTooLarge {
            cells,
            limit: MAX_TABLE_CELLS,
        });
    }
    let c_y = matrix.response_cardinality;
    let mut counts = vec![0u32; cells as usize];
    for i in 0..matrix.n_objects {
        let mut idx = 0usize;
        for (&v, &dim) in tuple.iter().zip(&dims) {
            idx = idx * dim + matrix.codes[v][i] as usize;
        }
        counts[idx * c_y + matrix.response_codes[i] as usize] += 1;
    }
    Ok(ContingencyTable {
        counts,
        tuple: tuple.to_vec(),
        dims,
        response_cardinality: c_y,
        n_objects: matrix.n_objects,
    })
}

/// Plug-in entropy of a count vector in nats, with the 0*ln(0) = 0
/// convention.
pub fn entropy(counts: &[u32], n_objects: usize) -> Result<f64, InfoError> {
    if n_objects == 0 {
        return Err(InfoError::EmptyTable);
    }
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total != n_objects as u64 {
        return Err(InfoError::CountMismatch {
            expected: n_objects as u64,
            actual: total,
        });
    }
    let n = n_objects as f64;
    let sum_xlnx: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let x = c as f64;
            x * x.ln()
        })
        .sum();
    Ok((n * n.ln() - sum_xlnx) / n)
}

/// Lookup table for x*ln(x) over integer counts 0..=n.
pub(crate) struct XlnxTable(Vec<f64>);

impl XlnxTable {
    pub fn new(max_count: usize) -> Self {
        XlnxTable(
            (0..=max_count)
                .map(|i| {
                    if i == 0 {
                        0.0
                    } else {
                        let x = i as f64;
                        x * x.ln()
                    }
                })
                .collect(),
        )
    }

    #[inline]
    pub fn get(&self, count: u32) -> f64 {
        self.0[count as usize]
    }
}

/// Scratch buffers reused across tuple evaluations.
pub(crate) struct EvalScratch {
    pub ys_marginal: Vec<u32>,
    pub strides: Vec<usize>,
}

impl EvalScratch {
    pub fn new() -> Self {
        EvalScratch {
            ys_marginal: Vec::new(),
            strides: Vec::new(),
        }
    }
}

/// Computes CMI (nats) and chi-squared degrees of freedom for every member
/// of the tuple whose joint counts are in `counts`.
///
/// `counts` uses the same layout as [`ContingencyTable`]: response innermost.
#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_members(
    counts: &[u32],
    dims: &[usize],
    c_y: usize,
    n_objects: usize,
    xlnx: &XlnxTable,
    scratch: &mut EvalScratch,
    out_cmi: &mut [f64],
    out_df: &mut [u64],
) {
    let k = dims.len();
    let combos = counts.len() / c_y;
    let n = n_objects as f64;

    // Full joint term and the response-marginalized term are shared by
    // every member of the tuple.
    let mut s_full = 0.0;
    let mut s_tuple = 0.0;
    for chunk in counts.chunks_exact(c_y) {
        let mut cell_total = 0u32;
        for &c in chunk {
            s_full += xlnx.get(c);
            cell_total += c;
        }
        s_tuple += xlnx.get(cell_total);
    }

    for member in 0..k {
        let reduced_combos = combos / dims[member];
        let ys = &mut scratch.ys_marginal;
        ys.clear();
        ys.resize(reduced_combos * c_y, 0);

        // Stride of one step in digit `j` within the collapsed index.
        let collapsed_stride = &mut scratch.strides;
        collapsed_stride.clear();
        collapsed_stride.resize(k, 0);
        let mut acc = 1usize;
        for j in (0..k).rev() {
            if j == member {
                continue;
            }
            collapsed_stride[j] = acc;
            acc *= dims[j];
        }

        for combo_idx in 0..combos {
            let mut rem = combo_idx;
            let mut collapsed = 0usize;
            for j in (0..k).rev() {
                let digit = rem % dims[j];
                rem /= dims[j];
                if j != member {
                    collapsed += digit * collapsed_stride[j];
                }
            }
            let src = combo_idx * c_y;
            let dst = collapsed * c_y;
            for y in 0..c_y {
                ys[dst + y] += counts[src + y];
            }
        }

        let mut s_ys = 0.0;
        let mut s_s = 0.0;
        for chunk in ys.chunks_exact(c_y) {
            let mut cell_total = 0u32;
            for &c in chunk {
                s_ys += xlnx.get(c);
                cell_total += c;
            }
            s_s += xlnx.get(cell_total);
        }

        let cmi = (s_full - s_tuple - s_ys + s_s) / n;
        debug_assert!(cmi > -1e-12 * n, "cmi {cmi} below rounding floor");
        out_cmi[member] = cmi.max(0.0);

        let df_rest: u64 = (0..k)
            .filter(|&j| j != member)
            .map(|j| dims[j] as u64)
            .product();
        out_df[member] = (c_y as u64 - 1) * (dims[member] as u64 - 1) * df_rest;
    }
}

/// CMI and degrees of freedom for every member of the tuple.
pub fn evaluate_tuple(table: &ContingencyTable) -> TupleResult {
    let k = table.dims.len();
    let xlnx = XlnxTable::new(table.n_objects);
    let mut scratch = EvalScratch::new();
    let mut cmi = vec![0.0; k];
    let mut df = vec![0u64; k];
    eval_members(
        &table.counts,
        &table.dims,
        table.response_cardinality,
        table.n_objects,
        &xlnx,
        &mut scratch,
        &mut cmi,
        &mut df,
    );
    TupleResult {
        tuple: table.tuple.clone(),
        cmi_per_member: cmi,
        df_per_member: df,
    }
}

/// CMI in nats and chi-squared degrees of freedom for the member at
/// `member_position` within the tuple, conditioning on the remaining
/// members. An empty rest reduces to plain mutual information.
pub fn conditional_mutual_information(
    table: &ContingencyTable,
    member_position: usize,
) -> Result<(f64, u64), InfoError> {
    if member_position >= table.dims.len() {
        return Err(InfoError::MemberOutOfRange {
            position: member_position,
            k: table.dims.len(),
        });
    }
    let result = evaluate_tuple(table);
    Ok((
        result.cmi_per_member[member_position],
        result.df_per_member[member_position],
    ))
}

/// Interaction information of (Y, X1, X2) in nats; positive values indicate
/// synergy, negative redundancy. Diagnostic only.
pub fn interaction_information(table: &ContingencyTable) -> Result<f64, InfoError> {
    if table.dims.len() != 2 {
        return Err(InfoError::NotPairTable {
            k: table.dims.len(),
        });
    }
    let n = table.n_objects;
    let c_y = table.response_cardinality;
    let (c1, c2) = (table.dims[0], table.dims[1]);

    let mut yx1 = vec![0u32; c_y * c1];
    let mut yx2 = vec![0u32; c_y * c2];
    let mut x1x2 = vec![0u32; c1 * c2];
    let mut x1 = vec![0u32; c1];
    let mut x2 = vec![0u32; c2];
    let mut y_only = vec![0u32; c_y];

    for a in 0..c1 {
        for b in 0..c2 {
            for y in 0..c_y {
                let c = table.counts[(a * c2 + b) * c_y + y];
                yx1[y * c1 + a] += c;
                yx2[y * c2 + b] += c;
                x1x2[a * c2 + b] += c;
                x1[a] += c;
                x2[b] += c;
                y_only[y] += c;
            }
        }
    }

    let h_full = entropy(&table.counts, n)?;
    Ok(-h_full + entropy(&yx1, n)? + entropy(&yx2, n)? + entropy(&x1x2, n)? - entropy(&y_only, n)?
        - entropy(&x1, n)?
        - entropy(&x2, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DiscreteMatrix;

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

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[3, 3], 6).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(entropy(&[12], 12).unwrap(), 0.0);
        let h = entropy(&[1, 1, 2], 4).unwrap();
        assert!((h - 1.0397207708399179).abs() < 1e-6, "{h}");
        assert!(matches!(entropy(&[0, 0], 0), Err(InfoError::EmptyTable)));
        assert!(matches!(
            entropy(&[1, 2], 4),
            Err(InfoError::CountMismatch { .. })
        ));
    }

    #[test]
    fn uniform_1d_table() {
        let m = matrix(
            vec![vec![0, 1, 2, 0, 1, 2]],
            vec![3],
            vec![0, 0, 0, 1, 1, 1],
            2,
        );
        let t = build_contingency(&m, &[0]).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(t.count(y, &[x]), 1);
            }
        }
        assert_eq!(t.counts().iter().sum::<u32>(), 6);
    }

    #[test]
    fn identity_response_gives_ln2() {
        let x = vec![0u32, 1, 0, 1, 0, 1, 0, 1];
        let m = matrix(vec![x.clone()], vec![2], x, 2);
        let t = build_contingency(&m, &[0]).unwrap();
        let (cmi, df) = conditional_mutual_information(&t, 0).unwrap();
        assert!((cmi - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(df, 1);
    }

    #[test]
    fn xor_pair_splits_information() {
        // Balanced XOR: marginal MI is zero, conditional MI is ln 2.
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut y = Vec::new();
        for a in 0..2u32 {
            for b in 0..2u32 {
                x1.push(a);
                x2.push(b);
                y.push(a ^ b);
            }
        }
        let m = matrix(vec![x1, x2], vec![2, 2], y, 2);

        let t1 = build_contingency(&m, &[0]).unwrap();
        let (mi, _) = conditional_mutual_information(&t1, 0).unwrap();
        assert!(mi.abs() < 1e-12);

        let t12 = build_contingency(&m, &[0, 1]).unwrap();
        let (cmi, df) = conditional_mutual_information(&t12, 0).unwrap();
        assert!((cmi - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(df, 2);

        let (cmi2, _) = conditional_mutual_information(&t12, 1).unwrap();
        assert!((cmi2 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn df_formula_with_two_conditioners() {
        // C_Y = 2, three ternary variables: df per member = 1 * 2 * 9 = 18.
        let n = 27;
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        let mut y = Vec::new();
        for i in 0..n {
            cols[0].push((i % 3) as u32);
            cols[1].push(((i / 3) % 3) as u32);
            cols[2].push(((i / 9) % 3) as u32);
            y.push((i % 2) as u32);
        }
        let m = matrix(cols, vec![3, 3, 3], y, 2);
        let t = build_contingency(&m, &[0, 1, 2]).unwrap();
        let r = evaluate_tuple(&t);
        assert_eq!(r.df_per_member, vec![18, 18, 18]);
    }

    #[test]
    fn correlated_and_table_counts() {
        // Joint (x1, x2) frequencies 1/3, 1/6, 1/6, 1/3 at N = 12 with
        // y = x1 AND x2: the y = 1 slice holds a single cell of 4.
        let t = and_table_n12();
        assert_eq!(t.count(1, &[0, 0]), 0);
        assert_eq!(t.count(1, &[0, 1]), 0);
        assert_eq!(t.count(1, &[1, 0]), 0);
        assert_eq!(t.count(1, &[1, 1]), 4);
        assert_eq!(t.count(0, &[0, 0]), 4);
    }

    fn and_table_n12() -> ContingencyTable {
        // counts[(x1 * 2 + x2) * 2 + y]
        let counts = vec![4, 0, 2, 0, 2, 0, 0, 4];
        ContingencyTable::from_counts(counts, vec![0, 1], vec![2, 2], 2, 12).unwrap()
    }

    #[test]
    fn interaction_information_cancels_for_correlated_and() {
        let t = and_table_n12();
        let ii = interaction_information(&t).unwrap();
        assert!(ii.abs() < 1e-12, "{ii}");
    }

    #[test]
    fn interaction_information_of_xor_is_ln2() {
        // Balanced XOR over 8 objects.
        let mut counts = vec![0u32; 8];
        for a in 0..2usize {
            for b in 0..2usize {
                let y = a ^ b;
                counts[(a * 2 + b) * 2 + y] += 2;
            }
        }
        let t = ContingencyTable::from_counts(counts, vec![0, 1], vec![2, 2], 2, 8).unwrap();
        let ii = interaction_information(&t).unwrap();
        assert!((ii - std::f64::consts::LN_2).abs() < 1e-12, "{ii}");
    }

    #[test]
    fn interaction_information_zero_for_independent_product() {
        // Y independent of (X1, X2): exact product counts.
        let mut counts = Vec::new();
        for _a in 0..2 {
            for _b in 0..3 {
                counts.extend_from_slice(&[2, 4]);
            }
        }
        let t = ContingencyTable::from_counts(counts, vec![0, 1], vec![2, 3], 2, 36).unwrap();
        let ii = interaction_information(&t).unwrap();
        assert!(ii.abs() < 1e-12, "{ii}");
    }

    #[test]
    fn marginals_are_consistent() {
        let m = matrix(
            vec![vec![0, 1, 2, 0, 1, 2, 0, 0], vec![0, 0, 1, 1, 0, 1, 0, 1]],
            vec![3, 2],
            vec![0, 1, 0, 1, 1, 0, 0, 1],
            2,
        );
        let t = build_contingency(&m, &[0, 1]).unwrap();
        assert_eq!(t.tuple_marginal().iter().sum::<u32>(), 8);
        assert_eq!(t.response_marginal(), vec![4, 4]);
    }

    #[test]
    fn table_errors() {
        let m = matrix(vec![vec![0, 1]], vec![2], vec![0, 1], 2);
        assert!(matches!(
            build_contingency(&m, &[1]),
            Err(InfoError::TupleIndexOutOfRange { .. })
        ));
        let m2 = matrix(vec![vec![0, 1], vec![0, 1]], vec![2, 2], vec![0, 1], 2);
        assert!(matches!(
            build_contingency(&m2, &[1, 0]),
            Err(InfoError::TupleNotIncreasing)
        ));
    }
}
