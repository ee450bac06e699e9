//! Minimum-cost bipartite assignment (Hungarian method, potentials form).
//!
//! Used by foot/parent pairing, box/cluster association, tracking, cross-node
//! fusion and metric matching.

/// Cost used in place of forbidden pairs. Anything at or above
/// [`FORBIDDEN`] is never reported as a match by [`solve_gated`].
pub const FORBIDDEN: f64 = 1.0e9;

/// Solves the rectangular assignment problem.
///
/// Returns, for every row, the column assigned to it. Exactly
/// `min(rows, cols)` rows receive a column. All costs must be finite.
pub fn solve(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    if cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve_wide(rows, cols, |r, c| cost[r][c])
    } else {
        let by_col = solve_wide(cols, rows, |r, c| cost[c][r]);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    }
}

/// Assignment followed by gating: pairs whose cost exceeds `gate` (or that
/// are [`FORBIDDEN`]) are dropped. Output is `(row, col, cost)` sorted by row.
pub fn solve_gated(cost: &[Vec<f64>], gate: f64) -> Vec<(usize, usize, f64)> {
    solve(cost)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| {
            let c = c?;
            let v = cost[r][c];
            (v <= gate && v < FORBIDDEN).then_some((r, c, v))
        })
        .collect()
}

/// Total cost of an assignment, summed in row order.
pub fn total_cost(cost: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum()
}

// rows <= cols. Shortest augmenting path with row/column potentials.
fn solve_wide(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // col_owner[j] = row (1-based) matched to column j, 0 = free
    let mut col_owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=cols {
        if col_owner[j] != 0 {
            out[col_owner[j] - 1] = Some(j - 1);
        }
    }
    out
}
