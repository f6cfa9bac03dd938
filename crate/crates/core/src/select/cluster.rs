use serde::Serialize;

use crate::channel::{Channel, InputSubset};
use crate::error::{Error, Result};
use crate::prob::js_raw;

/// Symmetric matrix of pairwise distances between input symbols.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    size: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from `f(i, j)` evaluated for `i < j`.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            for j in i + 1..size {
                let d = f(i, j);
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "distance ({i}, {j}) = {d} must be finite and non-negative"
                    )));
                }
                data[i * size + j] = d;
                data[j * size + i] = d;
            }
        }
        Ok(Self { size, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: n,
                    found: r.len(),
                });
            }
            if r[i] != 0.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                if (r[j] - rows[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }
}

/// Jensen–Shannon distances between all pairs of rows, in nats.
pub fn pairwise_jsd(channel: &Channel) -> DistanceMatrix {
    DistanceMatrix::from_fn(channel.num_inputs(), |i, j| js_raw(channel.row(i), channel.row(j)))
        .expect("JSD lies in [0, ln 2]")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeStep {
    /// Smallest member of each merged cluster, `a < b`.
    pub a: usize,
    pub b: usize,
    pub linkage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    /// Sorted members, clusters ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub merge_trace: Vec<MergeStep>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster index of every symbol.
    pub fn labels(&self, num_inputs: usize) -> Vec<usize> {
        let mut labels = vec![usize::MAX; num_inputs];
        for (c, members) in self.clusters.iter().enumerate() {
            for &x in members {
                labels[x] = c;
            }
        }
        labels
    }
}

/// Agglomerative complete-linkage clustering down to `k` clusters.
///
/// Ties between equal linkages go to the pair whose smallest members are
/// lexicographically smallest.
pub fn cluster_inputs(d: &DistanceMatrix, k: usize) -> Result<ClusterAssignment> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, num_inputs: n });
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // linkage[i][j] between live clusters i and j, indexed by position.
    let mut linkage: Vec<Vec<f64>> = (0..n).map(|i| d.row(i).to_vec()).collect();
    let mut trace = Vec::with_capacity(n - k);

    while clusters.len() > k {
        let m = clusters.len();
        let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
        for i in 0..m {
            for j in i + 1..m {
                if linkage[i][j] < best {
                    (bi, bj, best) = (i, j, linkage[i][j]);
                }
            }
        }
        trace.push(MergeStep {
            a: clusters[bi][0],
            b: clusters[bj][0],
            linkage: best,
        });
        let moved = clusters.remove(bj);
        clusters[bi].extend(moved);
        clusters[bi].sort_unstable();
        for t in 0..m {
            let v = linkage[bi][t].max(linkage[bj][t]);
            linkage[bi][t] = v;
            linkage[t][bi] = v;
        }
        linkage[bi][bi] = 0.0;
        linkage.remove(bj);
        for row in linkage.iter_mut() {
            row.remove(bj);
        }
    }

    Ok(ClusterAssignment {
        clusters,
        merge_trace: trace,
    })
}

/// One symbol per cluster: the member with the largest average distance to
/// every other symbol of the channel (smallest index on ties).
pub fn select_representatives(d: &DistanceMatrix, assignment: &ClusterAssignment) -> Result<InputSubset> {
    let n = d.size();
    let denom = n.saturating_sub(1).max(1) as f64;
    let avg: Vec<f64> = (0..n).map(|x| d.row(x).iter().sum::<f64>() / denom).collect();
    let mut picks = Vec::with_capacity(assignment.len());
    for members in &assignment.clusters {
        let mut best = *members.first().ok_or(Error::EmptySubset)?;
        for &x in members {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, num_inputs: n });
            }
            if avg[x] > avg[best] || (avg[x] == avg[best] && x < best) {
                best = x;
            }
        }
        picks.push(best);
    }
    InputSubset::from_unsorted(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::fixtures::counterexample;
    use crate::channel::validate_channel;
    use crate::prob::js_divergence;

    fn toy() -> DistanceMatrix {
        DistanceMatrix::from_rows(&[
            vec![0.0, 0.1, 0.5, 0.6],
            vec![0.1, 0.0, 0.55, 0.5],
            vec![0.5, 0.55, 0.0, 0.1],
            vec![0.6, 0.5, 0.1, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn jsd_matrix_examples() {
        let same = validate_channel(&vec![vec![0.3, 0.7]; 3]).unwrap();
        let d = pairwise_jsd(&same);
        assert!((0..3).all(|i| d.row(i).iter().all(|&v| v == 0.0)));

        let id = validate_channel(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((pairwise_jsd(&id).get(0, 1) - std::f64::consts::LN_2).abs() < 1e-15);

        let ce = counterexample();
        let d = pairwise_jsd(&ce);
        for i in 0..4 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..4 {
                if i != j {
                    let direct = js_divergence(ce.row(i), ce.row(j)).unwrap();
                    assert!((d.get(i, j) - direct).abs() < 1e-15);
                    assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
    }

    #[test]
    fn matrix_validation() {
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 0.1], vec![0.2, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.1]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, -0.1], vec![-0.1, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 0.1]]).is_err());
    }

    #[test]
    fn cluster_examples() {
        let d = toy();
        let all = cluster_inputs(&d, 4).unwrap();
        assert_eq!(all.clusters, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(all.merge_trace.is_empty());

        let one = cluster_inputs(&d, 1).unwrap();
        assert_eq!(one.clusters, vec![vec![0, 1, 2, 3]]);
        assert_eq!(one.merge_trace.len(), 3);

        let two = cluster_inputs(&d, 2).unwrap();
        assert_eq!(two.clusters, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(two.merge_trace[0], MergeStep { a: 0, b: 1, linkage: 0.1 });
        assert_eq!(two.merge_trace[1], MergeStep { a: 2, b: 3, linkage: 0.1 });
        // complete linkage: max over cross pairs
        assert_eq!(one.merge_trace[2].linkage, 0.6);

        assert!(matches!(cluster_inputs(&d, 0), Err(Error::InvalidK { .. })));
        assert!(matches!(cluster_inputs(&d, 5), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn tie_break_prefers_smallest_pair() {
        let d = DistanceMatrix::from_fn(4, |_, _| 0.2).unwrap();
        let c = cluster_inputs(&d, 3).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1], vec![2], vec![3]]);
        let c = cluster_inputs(&d, 2).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn representative_examples() {
        let d = toy();
        let singles = cluster_inputs(&d, 4).unwrap();
        assert_eq!(select_representatives(&d, &singles).unwrap().indices(), &[0, 1, 2, 3]);

        // averages: 0 -> 1.2/3, 1 -> 1.15/3, 2 -> 1.15/3, 3 -> 1.2/3
        let two = cluster_inputs(&d, 2).unwrap();
        assert_eq!(select_representatives(&d, &two).unwrap().indices(), &[0, 3]);

        let ch = validate_channel(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let d = pairwise_jsd(&ch);
        let c = cluster_inputs(&d, 2).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1], vec![2]]);
        assert_eq!(select_representatives(&d, &c).unwrap().indices(), &[0, 2]);
    }

    #[test]
    fn representative_uses_all_symbols() {
        // Row 1 is farther from rows 2 and 3 than row 0 is.
        let ch = validate_channel(&[
            vec![0.5, 0.3, 0.2],
            vec![0.55, 0.35, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![0.2, 0.1, 0.7],
        ])
        .unwrap();
        let d = pairwise_jsd(&ch);
        let c = cluster_inputs(&d, 2).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1], vec![2, 3]]);
        let a0 = (d.get(0, 1) + d.get(0, 2) + d.get(0, 3)) / 3.0;
        let a1 = (d.get(1, 0) + d.get(1, 2) + d.get(1, 3)) / 3.0;
        assert!(a1 > a0);
        assert_eq!(select_representatives(&d, &c).unwrap().indices()[0], 1);
    }
}
