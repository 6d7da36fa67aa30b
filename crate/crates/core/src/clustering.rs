//! Complete-linkage agglomerative clustering of UEs by channel-direction
//! dissimilarity, used to pick the `K − 1` RSMA common-signal subsets.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::SchemeSpec;
use crate::error::{Error, Result};
use crate::model::ChannelSet;

/// `1 − |aᴴb| / (‖a‖‖b‖)`, in `[0, 1]`.
pub fn dissimilarity(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let inner = a.dotc(b).norm();
    Ok((1.0 - inner / (na * nb)).clamp(0.0, 1.0))
}

/// Pairwise dissimilarities of the estimated channels. A UE with an all-zero
/// estimate is at distance 1 from every other UE.
pub fn dissimilarity_matrix(channels: &ChannelSet) -> DMatrix<f64> {
    let k_n = channels.num_ues();
    let rows: Vec<_> = (0..k_n).map(|k| channels.estimate(k)).collect();
    DMatrix::from_fn(k_n, k_n, |a, b| {
        if a == b {
            0.0
        } else {
            dissimilarity(&rows[a], &rows[b]).unwrap_or(1.0)
        }
    })
}

/// Maximum pairwise dissimilarity across two disjoint clusters.
pub fn complete_linkage(a: &[usize], b: &[usize], d: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidIndex("empty cluster".into()));
    }
    if a.iter().any(|k| b.contains(k)) {
        return Err(Error::OverlappingClusters);
    }
    let mut best = f64::NEG_INFINITY;
    for &k in a {
        for &m in b {
            best = best.max(d[(k, m)]);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub merged: Vec<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn subsets(&self) -> Vec<Vec<usize>> {
        self.merges.iter().map(|m| m.merged.clone()).collect()
    }
}

/// Runs the agglomeration on a precomputed dissimilarity matrix.
///
/// Ties on the linkage distance go to the lexicographically smallest pair of
/// cluster indices; the merged cluster keeps the smaller index.
pub fn agglomerate(d: &DMatrix<f64>) -> Result<Dendrogram> {
    let k_n = d.nrows();
    if k_n < 2 {
        return Err(Error::TooFewUes(k_n));
    }
    let mut clusters: Vec<Option<Vec<usize>>> = (0..k_n).map(|k| Some(vec![k])).collect();
    let mut merges = Vec::with_capacity(k_n - 1);
    for _ in 0..k_n - 1 {
        let active: Vec<usize> = (0..k_n).filter(|&k| clusters[k].is_some()).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let dist = complete_linkage(
                    clusters[a].as_ref().expect("active"),
                    clusters[b].as_ref().expect("active"),
                    d,
                )?;
                if best.map_or(true, |(_, _, bd)| dist < bd) {
                    best = Some((a, b, dist));
                }
            }
        }
        let (a, b, dist) = best.expect("at least two active clusters");
        let right = clusters[b].take().expect("active");
        let left = clusters[a].clone().expect("active");
        let mut merged: Vec<usize> = left.iter().chain(&right).copied().collect();
        merged.sort_unstable();
        clusters[a] = Some(merged.clone());
        merges.push(Merge { left, right, merged, distance: dist });
    }
    Ok(Dendrogram { merges })
}

/// RSMA scheme whose `K − 1` common subsets come from clustering the estimated channels.
pub fn cluster_subsets(channels: &ChannelSet) -> Result<SchemeSpec> {
    let dendro = agglomerate(&dissimilarity_matrix(channels))?;
    SchemeSpec::rsma(channels.num_ues(), dendro.subsets())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dissimilarity_endpoints() {
        let a = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3)]);
        let b = a.scale(3.0).map(|x| x * c(0.0, 1.0));
        assert!(dissimilarity(&a, &b).unwrap().abs() < 1e-12);
        let e1 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let e2 = DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 2.0)]);
        assert!((dissimilarity(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = DVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
        assert!((dissimilarity(&e1, &d).unwrap() - (1.0 - s)).abs() < 1e-12);
        assert!(matches!(dissimilarity(&e1, &DVector::zeros(2)), Err(Error::ZeroChannel)));
    }

    #[test]
    fn linkage_is_max_over_cross_pairs() {
        let d = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.1, 0.7, 0.3, 0.1, 0.0, 0.2, 0.9, 0.7, 0.2, 0.0, 0.4, 0.3, 0.9, 0.4, 0.0],
        );
        assert_eq!(complete_linkage(&[0], &[2], &d).unwrap(), 0.7);
        // brute force over cross pairs
        let a = [0, 1];
        let b = [2, 3];
        let mut brute = 0.0f64;
        for &x in &a {
            for &y in &b {
                brute = brute.max(d[(x, y)]);
            }
        }
        assert_eq!(complete_linkage(&a, &b, &d).unwrap(), brute);
        assert_eq!(brute, 0.9);
        assert!(matches!(complete_linkage(&[0, 1], &[1, 2], &d), Err(Error::OverlappingClusters)));
    }

    #[test]
    fn hand_traced_three_ue_case() {
        // D(0,1) < D(0,2) < D(1,2)
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 0.2, 0.1, 0.0, 0.3, 0.2, 0.3, 0.0]);
        let dendro = agglomerate(&d).unwrap();
        assert_eq!(dendro.subsets(), vec![vec![0, 1], vec![0, 1, 2]]);
        assert_eq!(dendro.merges[1].distance, 0.3);
    }

    #[test]
    fn two_ues_single_subset() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, 0.0]);
        assert_eq!(agglomerate(&d).unwrap().subsets(), vec![vec![0, 1]]);
        assert!(matches!(agglomerate(&DMatrix::zeros(1, 1)), Err(Error::TooFewUes(1))));
    }

    #[test]
    fn ties_break_to_lowest_pair() {
        let d = DMatrix::from_element(4, 4, 0.5) - DMatrix::identity(4, 4).scale(0.5);
        let subsets = agglomerate(&d).unwrap().subsets();
        assert_eq!(subsets, vec![vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 3]]);
    }

    #[test]
    fn zero_estimate_is_maximally_dissimilar() {
        let est = DMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 1.0), c(0.2, 0.0)]);
        let ch = ChannelSet::new(est, DMatrix::zeros(3, 2)).unwrap();
        let d = dissimilarity_matrix(&ch);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(1, 2)], 1.0);
        let spec = cluster_subsets(&ch).unwrap();
        assert_eq!(spec.subsets.len(), 2);
        assert_eq!(spec.subsets[1], vec![0, 1, 2]);
    }
}
