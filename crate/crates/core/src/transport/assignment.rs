//! Square assignment by shortest augmenting paths with dual potentials,
//! O(n^3).

/// Minimum-cost perfect matching for a dense row-major `n x n` cost matrix.
/// Returns `col_of_row` plus row and column potentials with
/// `u[i] + v[j] <= cost[i][j]` and equality on matched pairs.
pub(crate) fn solve(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(cost.len(), n * n);
    const NONE: usize = usize::MAX;
    // Index 0 of the column arrays is a virtual column used as the search root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![NONE; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for row in 0..n {
        row_of_col[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let crow = &cost[i0 * n..(i0 + 1) * n];
            let ui = u[i0 + 1];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j] + 1] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == NONE {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of_col[j]] = j - 1;
    }
    (col_of_row, u[1..].to_vec(), v[1..].to_vec())
}
