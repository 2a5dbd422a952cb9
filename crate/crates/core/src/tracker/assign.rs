//! Minimum-cost bipartite assignment (Hungarian / Kuhn-Munkres with potentials).

/// Result of a gated assignment over a `rows x cols` cost matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Optimal one-to-one assignment minimizing total cost.
///
/// Every row is matched when `rows <= cols`, every column otherwise.
/// Returned pairs are sorted by row.
pub fn hungarian(costs: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = costs.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = costs[0].len();
    if cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| costs[r][c]).collect())
            .collect();
        let mut out: Vec<(usize, usize)> = hungarian(&transposed)
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        out.sort_unstable();
        return out;
    }

    // 1-indexed potentials formulation; n = rows <= m = cols.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    out.sort_unstable();
    out
}

/// Optimal assignment on `1 - IoU` costs, then drops pairs whose IoU is
/// below `gate`; their rows and columns are reported unmatched.
pub fn assign(costs: &[Vec<f64>], gate: f64) -> Assignment {
    let rows = costs.len();
    let cols = costs.first().map_or(0, |r| r.len());
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut matches = Vec::new();
    for (r, c) in hungarian(costs) {
        let overlap = 1.0 - costs[r][c];
        if overlap >= gate {
            row_used[r] = true;
            col_used[c] = true;
            matches.push((r, c));
        }
    }
    Assignment {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injective maps from the smaller side.
    fn brute_force(costs: &[Vec<f64>]) -> f64 {
        let rows = costs.len();
        let cols = costs[0].len();
        fn rec(costs: &[Vec<f64>], r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, transpose: bool) {
            let (rows, cols) = if transpose { (costs[0].len(), costs.len()) } else { (costs.len(), costs[0].len()) };
            if r == rows {
                *best = best.min(acc);
                return;
            }
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    let v = if transpose { costs[c][r] } else { costs[r][c] };
                    rec(costs, r + 1, used, acc + v, best, transpose);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        let transpose = rows > cols;
        let width = if transpose { rows } else { cols };
        rec(costs, 0, &mut vec![false; width], 0.0, &mut best, transpose);
        best
    }

    #[test]
    fn single_cell_gating() {
        let a = assign(&[vec![0.1]], 0.7);
        assert_eq!(a.matches, vec![(0, 0)]);
        let a = assign(&[vec![0.5]], 0.7);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_rows, vec![0]);
        assert_eq!(a.unmatched_cols, vec![0]);
    }

    #[test]
    fn empty_matrix() {
        let a = assign(&[], 0.5);
        assert_eq!(a, Assignment::default());
        let a = assign(&[vec![], vec![]], 0.5);
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, c), r)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn hungarian_matches_brute_force(costs in matrix()) {
            let m = hungarian(&costs);
            prop_assert_eq!(m.len(), costs.len().min(costs[0].len()));
            let mut rows: Vec<_> = m.iter().map(|p| p.0).collect();
            let mut cols: Vec<_> = m.iter().map(|p| p.1).collect();
            rows.dedup();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(rows.len(), m.len());
            prop_assert_eq!(cols.len(), m.len());
            let total: f64 = m.iter().map(|&(r, c)| costs[r][c]).sum();
            prop_assert!((total - brute_force(&costs)).abs() < 1e-9);
        }
    }
}
