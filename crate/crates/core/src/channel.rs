//! Channel matrices and input subsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Distribution, INGEST_SUM_TOL};

/// Default cap on both alphabet sizes.
pub const DEFAULT_MAX_ALPHABET: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLimits {
    pub max_inputs: usize,
    pub max_outputs: usize,
}

impl Default for ChannelLimits {
    fn default() -> Self {
        Self {
            max_inputs: DEFAULT_MAX_ALPHABET,
            max_outputs: DEFAULT_MAX_ALPHABET,
        }
    }
}

/// A discrete memoryless channel: a row-stochastic `|X| × |Y|` matrix whose
/// row `x` is the conditional output law `W(·|x)`.
///
/// Stored row-major. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    num_inputs: usize,
    num_outputs: usize,
    data: Vec<f64>,
}

/// Validates a rectangular matrix of transition probabilities.
///
/// Rows must be non-negative and sum to one within `1e-9`; nothing is
/// renormalized.
pub fn validate_channel(raw: &[Vec<f64>]) -> Result<Channel> {
    validate_channel_with_limits(raw, ChannelLimits::default())
}

pub fn validate_channel_with_limits(raw: &[Vec<f64>], limits: ChannelLimits) -> Result<Channel> {
    let num_inputs = raw.len();
    if num_inputs == 0 || raw[0].is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let num_outputs = raw[0].len();
    if num_inputs > limits.max_inputs {
        return Err(Error::TooLarge {
            size: num_inputs,
            limit: limits.max_inputs,
        });
    }
    if num_outputs > limits.max_outputs {
        return Err(Error::TooLarge {
            size: num_outputs,
            limit: limits.max_outputs,
        });
    }
    let mut data = Vec::with_capacity(num_inputs * num_outputs);
    for (row, r) in raw.iter().enumerate() {
        if r.len() != num_outputs {
            return Err(Error::RaggedRow {
                row,
                expected: num_outputs,
                found: r.len(),
            });
        }
        let mut sum = 0.0;
        for (col, &v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { row, col });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > INGEST_SUM_TOL {
            return Err(Error::RowSumError { row, sum });
        }
        data.extend_from_slice(r);
    }
    Ok(Channel {
        num_inputs,
        num_outputs,
        data,
    })
}

impl Channel {
    /// Builds a channel from rows known to be valid distributions of equal
    /// length.
    pub fn from_distributions(rows: &[Distribution]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyMatrix)?;
        let num_outputs = first.len();
        let mut data = Vec::with_capacity(rows.len() * num_outputs);
        for r in rows {
            if r.len() != num_outputs {
                return Err(Error::DimensionMismatch {
                    expected: num_outputs,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            num_inputs: rows.len(),
            num_outputs,
            data,
        })
    }

    pub(crate) fn from_raw_parts(num_inputs: usize, num_outputs: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), num_inputs * num_outputs);
        Self {
            num_inputs,
            num_outputs,
            data,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.num_outputs..(x + 1) * self.num_outputs]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.num_outputs)
    }

    pub fn row_distribution(&self, x: usize) -> Distribution {
        Distribution::from_vec_unchecked(self.row(x).to_vec())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Row-major matrix entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sub-channel made of the rows in `subset`, in subset order.
    pub fn restrict(&self, subset: &InputSubset) -> Result<Channel> {
        subset.check_range(self.num_inputs)?;
        let mut data = Vec::with_capacity(subset.len() * self.num_outputs);
        for &x in subset.indices() {
            data.extend_from_slice(self.row(x));
        }
        Ok(Self::from_raw_parts(subset.len(), self.num_outputs, data))
    }

    /// Appends rows (e.g. hull points) below the existing ones.
    pub fn with_extra_rows<'a>(&self, extra: impl IntoIterator<Item = &'a [f64]>) -> Result<Channel> {
        let mut data = self.data.clone();
        let mut n = self.num_inputs;
        for r in extra {
            if r.len() != self.num_outputs {
                return Err(Error::DimensionMismatch {
                    expected: self.num_outputs,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
            n += 1;
        }
        Ok(Self::from_raw_parts(n, self.num_outputs, data))
    }

    /// Output law `Σ_x p(x) W(·|x)`.
    pub fn output_distribution(&self, input: &[f64]) -> Result<Distribution> {
        if input.len() != self.num_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.num_inputs,
                found: input.len(),
            });
        }
        let mut q = vec![0.0; self.num_outputs];
        self.push_forward_into(input, &mut q);
        Ok(Distribution::from_vec_unchecked(q))
    }

    pub(crate) fn push_forward_into(&self, input: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &p) in self.rows().zip(input) {
            if p == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += p * w;
            }
        }
    }

    /// Channel with its rows reordered by `perm` (row `i` of the result is
    /// row `perm[i]` of `self`).
    pub fn permute_inputs(&self, perm: &[usize]) -> Result<Channel> {
        check_permutation(perm, self.num_inputs)?;
        let mut data = Vec::with_capacity(self.data.len());
        for &x in perm {
            data.extend_from_slice(self.row(x));
        }
        Ok(Self::from_raw_parts(self.num_inputs, self.num_outputs, data))
    }

    /// Channel with output columns reordered by `perm`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Channel> {
        check_permutation(perm, self.num_outputs)?;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(perm.iter().map(|&y| row[y]));
        }
        Ok(Self::from_raw_parts(self.num_inputs, self.num_outputs, data))
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: perm.len(),
        });
    }
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// A non-empty, strictly increasing set of input indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct InputSubset(Vec<usize>);

impl InputSubset {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySubset);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedSubset(indices));
        }
        Ok(Self(indices))
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices)
    }

    pub fn all(num_inputs: usize) -> Self {
        assert!(num_inputs > 0);
        Self((0..num_inputs).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    /// Indices in `[0, num_inputs)` not in the subset.
    pub fn complement(&self, num_inputs: usize) -> Vec<usize> {
        (0..num_inputs).filter(|&x| !self.contains(x)).collect()
    }

    pub fn check_range(&self, num_inputs: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= num_inputs => Err(Error::IndexOutOfRange {
                index: last,
                num_inputs,
            }),
            _ => Ok(()),
        }
    }

    /// Subset made of the elements at `positions` within this subset.
    pub fn select_positions(&self, positions: &InputSubset) -> Result<InputSubset> {
        positions.check_range(self.len())?;
        Ok(Self(positions.indices().iter().map(|&p| self.0[p]).collect()))
    }
}

impl TryFrom<Vec<usize>> for InputSubset {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InputSubset> for Vec<usize> {
    fn from(s: InputSubset) -> Self {
        s.0
    }
}

impl std::fmt::Display for InputSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The four-row channel with equal row entropies used to show that
    /// capacity is not submodular.
    pub fn counterexample() -> Channel {
        validate_channel(&[
            vec![0.6, 0.2, 0.1, 0.1],
            vec![0.6, 0.1, 0.1, 0.2],
            vec![0.6, 0.1, 0.2, 0.1],
            vec![0.1, 0.6, 0.1, 0.2],
        ])
        .unwrap()
    }

    pub fn bsc(p: f64) -> Channel {
        validate_channel(&[vec![1.0 - p, p], vec![p, 1.0 - p]]).unwrap()
    }

    pub fn identity(n: usize) -> Channel {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        validate_channel(&rows).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn validate_examples() {
        let id = validate_channel(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!((id.num_inputs(), id.num_outputs()), (2, 2));
        let ce = counterexample();
        assert_eq!((ce.num_inputs(), ce.num_outputs()), (4, 4));
        match validate_channel(&[vec![0.5, 0.6]]) {
            Err(Error::RowSumError { row: 0, sum }) => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_errors() {
        assert!(matches!(validate_channel(&[]), Err(Error::EmptyMatrix)));
        assert!(matches!(validate_channel(&[vec![]]), Err(Error::EmptyMatrix)));
        assert!(matches!(
            validate_channel(&[vec![1.2, -0.2]]),
            Err(Error::NegativeEntry { row: 0, col: 1 })
        ));
        assert!(matches!(
            validate_channel(&[vec![1.0, 0.0], vec![1.0]]),
            Err(Error::RaggedRow { row: 1, .. })
        ));
        // no silent normalization
        assert!(validate_channel(&[vec![0.5, 0.5 + 2e-9]]).is_err());
        assert!(validate_channel(&[vec![0.5, 0.5 + 5e-10]]).is_ok());
        let limits = ChannelLimits {
            max_inputs: 1,
            max_outputs: 8,
        };
        assert!(matches!(
            validate_channel_with_limits(&[vec![1.0], vec![1.0]], limits),
            Err(Error::TooLarge { size: 2, limit: 1 })
        ));
    }

    #[test]
    fn restrict_examples() {
        let ce = counterexample();
        let all = InputSubset::all(4);
        assert_eq!(ce.restrict(&all).unwrap(), ce);
        let r = ce.restrict(&InputSubset::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(r.to_rows(), vec![vec![0.6, 0.2, 0.1, 0.1], vec![0.6, 0.1, 0.1, 0.2]]);
        let s = ce.restrict(&InputSubset::new(vec![2]).unwrap()).unwrap();
        assert_eq!((s.num_inputs(), s.num_outputs()), (1, 4));
        assert!(matches!(
            ce.restrict(&InputSubset::new(vec![1, 4]).unwrap()),
            Err(Error::IndexOutOfRange { index: 4, .. })
        ));
    }

    #[test]
    fn restrict_composes() {
        let ce = counterexample();
        let outer = InputSubset::new(vec![0, 2, 3]).unwrap();
        let inner = InputSubset::new(vec![1, 2]).unwrap();
        let twice = ce.restrict(&outer).unwrap().restrict(&inner).unwrap();
        let once = ce.restrict(&outer.select_positions(&inner).unwrap()).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn subset_validation() {
        assert!(matches!(InputSubset::new(vec![]), Err(Error::EmptySubset)));
        assert!(InputSubset::new(vec![1, 1]).is_err());
        assert!(InputSubset::new(vec![2, 1]).is_err());
        assert_eq!(
            InputSubset::from_unsorted(vec![3, 1, 3]).unwrap().indices(),
            &[1, 3]
        );
        assert_eq!(InputSubset::new(vec![0, 2]).unwrap().complement(4), vec![1, 3]);
        let parsed: Result<InputSubset, _> = serde_json::from_str::<InputSubset>("[2,1]");
        assert!(parsed.is_err());
    }

    #[test]
    fn permutations() {
        let ce = counterexample();
        let p = ce.permute_outputs(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.row(0), &[0.1, 0.1, 0.2, 0.6]);
        assert!(ce.permute_inputs(&[0, 0, 1, 2]).is_err());
        let _ = bsc(0.1);
        let _ = identity(3);
    }
}
