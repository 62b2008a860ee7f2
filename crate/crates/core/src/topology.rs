//! Unidirectional multi-leader communication topology over the virtual
//! sequence.
//!
//! Vehicle `j` listens to an earlier vehicle `i < j` unless some vehicle
//! strictly between them comes from the same lane as `j`. Consequently each
//! follower hears its nearest same-lane predecessor plus every opposite-lane
//! vehicle in between, and the predecessor set is always the contiguous block
//! `j-N_j ..= j-1`.

use crate::error::{Error, Result};
use crate::virtual_axis::Lane;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommTopology {
    n: usize,
    /// Row-major `n x n`; `adjacency[i * n + j] == 1` iff `j` receives from `i`.
    adjacency: Vec<u8>,
    /// Nearest-first predecessor indices for every vehicle.
    predecessors: Vec<Vec<usize>>,
}

/// Builds the topology from lane indicators in sequence order (0-based).
pub fn build_topology(lanes: &[Lane]) -> CommTopology {
    let n = lanes.len();
    let mut adjacency = vec![0u8; n * n];
    let mut predecessors = Vec::with_capacity(n);

    for j in 0..n {
        let mut preds = Vec::new();
        for i in (0..j).rev() {
            preds.push(i);
            adjacency[i * n + j] = 1;
            // Anything further downstream is shadowed by this vehicle.
            if lanes[i] == lanes[j] {
                break;
            }
        }
        predecessors.push(preds);
    }

    CommTopology {
        n,
        adjacency,
        predecessors,
    }
}

impl CommTopology {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from < self.n && to < self.n && self.adjacency[from * self.n + to] == 1
    }

    /// Predecessors of `j`, nearest first. Empty for the leader.
    pub fn predecessors(&self, j: usize) -> Result<&[usize]> {
        self.predecessors
            .get(j)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange { index: j, len: self.n })
    }

    /// `N_j`, the number of active predecessors.
    pub fn predecessor_count(&self, j: usize) -> Result<usize> {
        self.predecessors(j).map(<[usize]>::len)
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        self.adjacency.chunks(self.n.max(1)).take(self.n).map(<[u8]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lanes(flags: &[u8]) -> Vec<Lane> {
        flags.iter().map(|&f| Lane::from_flag(f).unwrap()).collect()
    }

    /// Converts 0-based predecessor indices to 1-based sequence numbers.
    fn preds1(t: &CommTopology, j1: usize) -> Vec<usize> {
        t.predecessors(j1 - 1).unwrap().iter().map(|i| i + 1).collect()
    }

    #[test]
    fn merge_example_with_five_vehicles() {
        // 1_r, 1_m, 2_m, 2_r, 3_m
        let t = build_topology(&lanes(&[0, 1, 1, 0, 1]));
        assert_eq!(preds1(&t, 4), vec![3, 2, 1]);
        assert_eq!(preds1(&t, 5), vec![4, 3]);
        assert_eq!(t.predecessor_count(4).unwrap(), 2);
    }

    #[test]
    fn single_lane_is_a_chain() {
        let t = build_topology(&lanes(&[1; 6]));
        assert!(t.predecessors(0).unwrap().is_empty());
        for j in 1..6 {
            assert_eq!(t.predecessors(j).unwrap(), &[j - 1]);
        }
    }

    #[test]
    fn twelve_vehicle_sequence() {
        let t = build_topology(&lanes(&[1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0]));
        assert_eq!(preds1(&t, 10), vec![9, 8, 7, 6]);
        assert_eq!(preds1(&t, 7), vec![6, 5, 4, 3, 2]);
        assert_eq!(preds1(&t, 12), vec![11, 10, 9]);
        assert_eq!(preds1(&t, 2), vec![1]);
    }

    #[test]
    fn second_vehicle_always_hears_leader() {
        for flags in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let t = build_topology(&lanes(&flags));
            assert_eq!(t.predecessors(1).unwrap(), &[0]);
        }
    }

    #[test]
    fn out_of_range_index() {
        let t = build_topology(&lanes(&[1, 0]));
        assert_eq!(
            t.predecessors(2).unwrap_err(),
            Error::IndexOutOfRange { index: 2, len: 2 }
        );
    }

    #[test]
    fn edges_only_run_from_earlier_to_later() {
        let t = build_topology(&lanes(&[1, 0, 0, 1, 0]));
        let rows = t.adjacency_rows();
        for (i, row) in rows.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a == 1 {
                    assert!(i < j);
                }
            }
        }
    }
}
