//! Distributed phase-2 scheduling.
//!
//! After phase 1 each user knows only how many packets it holds per batch.
//! From those counts it estimates, for every batch and every number of
//! already-sent recoded packets `u`, the probability that one more recoded
//! packet helps a typical peer, and sorts all estimates into a static
//! transmit order.

use std::cmp::Ordering;

use crate::analytics::binomial_pmf;
use crate::error::{invalid, Result};

/// Per-batch phase-1 reception counts of one user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceptionProfile {
    counts: Vec<usize>,
    batch_size: usize,
}

impl ReceptionProfile {
    pub fn new(counts: Vec<usize>, batch_size: usize) -> Result<Self> {
        if let Some((i, c)) = counts.iter().enumerate().find(|(_, c)| **c > batch_size) {
            return Err(invalid(
                "counts",
                format!("batch {} has {c} packets, more than M = {batch_size}", i + 1),
            ));
        }
        Ok(Self { counts, batch_size })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches(&self) -> usize {
        self.counts.len()
    }
}

/// Probability that exactly `m` of the `received` packets a user holds are
/// missing at a given peer, each lost independently with probability `p1`.
pub fn prob_exclusive(received: usize, m: usize, p1: f64, batch_size: usize) -> f64 {
    debug_assert!(received <= batch_size);
    if m > received {
        return 0.0;
    }
    binomial_pmf(received, m, p1)
}

/// Estimated probability that the `(u+1)`-th recoded packet of a batch, of
/// which the sender holds `received` packets, is still useful to a peer.
///
/// Useful if the peer misses at least `u + 1` of the sender's packets, or
/// misses `m <= u` of them and got at most `m - 1` of the `u` earlier
/// recoded packets (each delivered with probability `1 - p2`).
pub fn usefulness(received: usize, u: usize, p1: f64, p2: f64, batch_size: usize) -> f64 {
    let tail: f64 = (u + 1..=batch_size)
        .map(|m| prob_exclusive(received, m, p1, batch_size))
        .sum();
    let partial: f64 = (1..=u.min(batch_size))
        .map(|m| {
            let pm = prob_exclusive(received, m, p1, batch_size);
            if pm == 0.0 {
                return 0.0;
            }
            let got_few: f64 = (0..m).map(|l| binomial_pmf(u, l, 1.0 - p2)).sum();
            pm * got_few
        })
        .sum();
    tail + partial
}

/// `M x n` usefulness estimates; row `u`, column `i` is for the `(u+1)`-th
/// packet from batch `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct UsefulnessMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl UsefulnessMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry for transmission index `u` (0-based) of batch column `i` (0-based).
    pub fn get(&self, u: usize, i: usize) -> f64 {
        self.data[u * self.cols + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|u| self.get(u, i)).collect()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.cols..(u + 1) * self.cols]
    }
}

/// Builds the usefulness matrix of one user from its phase-1 counts.
pub fn build_matrix(profile: &ReceptionProfile, p1: f64, p2: f64) -> UsefulnessMatrix {
    let m = profile.batch_size();
    let n = profile.batches();
    // columns depend only on the count, so evaluate each distinct count once
    let mut by_count: Vec<Option<Vec<f64>>> = vec![None; m + 1];
    let mut data = vec![0.0; m * n];
    for (i, &c) in profile.counts().iter().enumerate() {
        let col = by_count[c]
            .get_or_insert_with(|| (0..m).map(|u| usefulness(c, u, p1, p2, m)).collect());
        for (u, v) in col.iter().enumerate() {
            data[u * n + i] = *v;
        }
    }
    UsefulnessMatrix {
        rows: m,
        cols: n,
        data,
    }
}

/// Static phase-2 transmit order of one user: batch IDs by descending
/// usefulness, each batch appearing `M` times.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitQueue {
    order: Vec<u32>,
    values: Vec<f64>,
    cycle: Vec<u32>,
}

impl TransmitQueue {
    /// 1-based batch IDs in transmit order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Usefulness of each entry of [`TransmitQueue::order`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Order used after the queue is exhausted: batches by descending
    /// usefulness of their last row, then ascending ID.
    pub fn cycle(&self) -> &[u32] {
        &self.cycle
    }

    /// Batch for the `slot`-th transmission of this user (0-based). Past the
    /// end of the queue it walks [`TransmitQueue::cycle`] repeatedly.
    pub fn batch_at(&self, slot: usize) -> Option<u32> {
        if slot < self.order.len() {
            Some(self.order[slot])
        } else if self.cycle.is_empty() {
            None
        } else {
            Some(self.cycle[(slot - self.order.len()) % self.cycle.len()])
        }
    }
}

/// Sorts all matrix entries in descending order; ties go to the lower `u`,
/// then the lower batch index.
pub fn build_queue(s: &UsefulnessMatrix) -> TransmitQueue {
    let mut entries: Vec<(f64, usize, usize)> = (0..s.rows)
        .flat_map(|u| (0..s.cols).map(move |i| (u, i)))
        .map(|(u, i)| (s.get(u, i), u, i))
        .collect();
    entries.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut cycle: Vec<usize> = (0..s.cols).collect();
    if s.rows > 0 {
        let last = s.rows - 1;
        cycle.sort_by(|&a, &b| {
            s.get(last, b)
                .partial_cmp(&s.get(last, a))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
    }
    TransmitQueue {
        order: entries.iter().map(|e| e.2 as u32 + 1).collect(),
        values: entries.iter().map(|e| e.0).collect(),
        cycle: cycle.into_iter().map(|i| i as u32 + 1).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRINTED: [[f64; 5]; 4] = [
        [0.7500, 0.5000, 0.8750, 0.9375, 0.7500],
        [0.3000, 0.0500, 0.5375, 0.7125, 0.3000],
        [0.0525, 0.0050, 0.2000, 0.3862, 0.0525],
        [0.0075, 0.0005, 0.0448, 0.1410, 0.0075],
    ];

    fn example_profile() -> ReceptionProfile {
        ReceptionProfile::new(vec![2, 1, 3, 4, 2], 4).unwrap()
    }

    #[test]
    fn prob_exclusive_examples() {
        assert!((prob_exclusive(2, 1, 0.5, 4) - 0.5).abs() < 1e-15);
        assert_eq!(prob_exclusive(2, 3, 0.5, 4), 0.0);
        assert_eq!(prob_exclusive(0, 0, 0.3, 4), 1.0);
    }

    #[test]
    fn usefulness_examples() {
        assert!((usefulness(4, 0, 0.5, 0.1, 4) - 0.9375).abs() < 1e-12);
        assert!((usefulness(4, 1, 0.5, 0.1, 4) - 0.7125).abs() < 1e-12);
        assert_eq!(usefulness(0, 0, 0.5, 0.1, 4), 0.0);
    }

    #[test]
    fn example_matrix_to_four_places() {
        let s = build_matrix(&example_profile(), 0.5, 0.1);
        for (u, row) in PRINTED.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                // 0.38625 is an exact tie and is printed as 0.3862
                assert!((s.get(u, i) - v).abs() <= 0.5e-4 + 1e-12, "S[{u}][{i}] = {} vs {v}", s.get(u, i));
            }
        }
    }

    #[test]
    fn example_queue_prefix() {
        let q = build_queue(&build_matrix(&example_profile(), 0.5, 0.1));
        assert_eq!(&q.order()[..6], &[4, 3, 1, 5, 4, 3]);
        assert_eq!(q.len(), 20);
    }

    #[test]
    fn zero_counts_give_zero_matrix() {
        let s = build_matrix(&ReceptionProfile::new(vec![0; 6], 4).unwrap(), 0.5, 0.1);
        assert!((0..4).all(|u| s.row(u).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn permuting_counts_permutes_columns() {
        let a = build_matrix(&example_profile(), 0.3, 0.2);
        let perm = [3, 0, 4, 1, 2];
        let counts: Vec<usize> = perm.iter().map(|&j| example_profile().counts()[j]).collect();
        let b = build_matrix(&ReceptionProfile::new(counts, 4).unwrap(), 0.3, 0.2);
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(b.column(i), a.column(j));
        }
    }

    #[test]
    fn single_batch_queue() {
        let q = build_queue(&build_matrix(&ReceptionProfile::new(vec![3], 8).unwrap(), 0.4, 0.1));
        assert_eq!(q.order(), &[1; 8]);
    }

    #[test]
    fn identical_columns_alternate() {
        let q = build_queue(&build_matrix(&ReceptionProfile::new(vec![3, 3], 4).unwrap(), 0.4, 0.1));
        assert_eq!(q.order(), &[1, 2, 1, 2, 1, 2, 1, 2]);
    }

    #[test]
    fn cycle_after_exhaustion() {
        let q = build_queue(&build_matrix(&example_profile(), 0.5, 0.1));
        assert_eq!(q.cycle(), &[4, 3, 1, 5, 2]);
        assert_eq!(q.batch_at(20), Some(4));
        assert_eq!(q.batch_at(24), Some(2));
        assert_eq!(q.batch_at(25), Some(4));
    }

    #[test]
    fn profile_rejects_overfull_batch() {
        assert!(ReceptionProfile::new(vec![1, 5], 4).is_err());
    }
}
