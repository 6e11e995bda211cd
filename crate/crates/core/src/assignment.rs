//! Minimum-cost detection-to-track assignment with a non-assignment cost.

use crate::scalar::Scalar;

/// Solves the square assignment problem; returns `row -> column`.
///
/// Shortest augmenting path with row/column potentials, O(n^3).
pub fn hungarian<T: Scalar>(cost: &[Vec<T>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|r| r.len() == n));
    // 1-based internally, index 0 is the virtual start column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = T::infinity();
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost[r - 1][c - 1] - u[r] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] = u[owner[c]] + delta;
                    v[c] = v[c] - delta;
                } else {
                    minv[c] = minv[c] - delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for c in 1..=n {
        if owner[c] != 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(track index, detection index)` pairs, sorted by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Assigns detections to tracks given a `tracks x detections` cost matrix.
///
/// Leaving a track or a detection unassigned costs `non_assignment_cost`
/// each, so a pair is only worth matching when its cost is below twice that.
pub fn assign_with_costs<T: Scalar>(costs: &[Vec<T>], num_detections: usize, non_assignment_cost: T) -> Assignment {
    let nt = costs.len();
    let nd = num_detections;
    let n = nt + nd;
    if nt == 0 || nd == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_tracks: (0..nt).collect(),
            unmatched_detections: (0..nd).collect(),
        };
    }
    // Any solution that uses a forbidden cell costs more than leaving
    // everything unassigned.
    let finite_total: T = costs.iter().flatten().copied().sum();
    let forbidden = finite_total + non_assignment_cost * T::from_usize_lossy(n) + T::one();
    let mut big = vec![vec![T::zero(); n]; n];
    for (i, row) in big.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = match (i < nt, j < nd) {
                (true, true) => costs[i][j],
                (true, false) => {
                    if j - nd == i {
                        non_assignment_cost
                    } else {
                        forbidden
                    }
                }
                (false, true) => {
                    if i - nt == j {
                        non_assignment_cost
                    } else {
                        forbidden
                    }
                }
                (false, false) => T::zero(),
            };
        }
    }
    let sol = hungarian(&big);
    let mut out = Assignment::default();
    let mut det_used = vec![false; nd];
    for (t, &c) in sol.iter().enumerate().take(nt) {
        if c < nd {
            out.matches.push((t, c));
            det_used[c] = true;
        } else {
            out.unmatched_tracks.push(t);
        }
    }
    out.unmatched_detections = (0..nd).filter(|d| !det_used[*d]).collect();
    out
}

/// Euclidean-distance assignment of detection centroids to predicted track centroids.
pub fn assign<T: Scalar>(tracks: &[(T, T)], detections: &[(T, T)], non_assignment_cost: T) -> Assignment {
    let costs: Vec<Vec<T>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| (t.0 - d.0).hypot(t.1 - d.1))
                .collect()
        })
        .collect();
    assign_with_costs(&costs, detections.len(), non_assignment_cost)
}

/// Total cost of an assignment under the non-assignment rule.
pub fn assignment_cost<T: Scalar>(costs: &[Vec<T>], a: &Assignment, non_assignment_cost: T) -> T {
    let matched: T = a.matches.iter().map(|&(t, d)| costs[t][d]).sum();
    matched + non_assignment_cost * T::from_usize_lossy(a.unmatched_tracks.len() + a.unmatched_detections.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_problem() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&c);
        let total: f64 = a.iter().enumerate().map(|(r, c2)| c[r][*c2]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn examples() {
        let a = assign(&[(0.0, 0.0)], &[(1.0, 0.0)], 30.0);
        assert_eq!(a.matches, vec![(0, 0)]);
        let a = assign(&[(0.0, 0.0)], &[(100.0, 0.0)], 30.0);
        assert!(a.matches.is_empty());
        assert_eq!((a.unmatched_tracks, a.unmatched_detections), (vec![0], vec![0]));
        let a = assign(&[(0.0, 0.0), (10.0, 0.0)], &[(9.0, 0.0), (1.0, 0.0)], 30.0);
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_sides() {
        let a = assign::<f64>(&[], &[(1.0, 1.0)], 30.0);
        assert_eq!(a.unmatched_detections, vec![0]);
        let a = assign::<f32>(&[(1.0, 1.0)], &[], 30.0);
        assert_eq!(a.unmatched_tracks, vec![0]);
    }
}
