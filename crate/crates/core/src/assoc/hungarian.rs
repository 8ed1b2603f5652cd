//! Rectangular linear assignment (Hungarian method with potentials).

/// Minimum-cost one-to-one assignment on a dense `rows x cols` cost matrix given
/// row-major. Every row of the smaller side gets exactly one partner. Returns
/// `(row, col)` pairs sorted by row.
pub fn assign_min_cost(costs: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(costs.len(), rows * cols, "cost matrix shape mismatch");
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let mut transposed = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                transposed[c * rows + r] = costs[r * cols + c];
            }
        }
        let mut pairs: Vec<(usize, usize)> = solve(&transposed, cols, rows)
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    solve(costs, rows, cols)
}

/// Maximum-score assignment; thin wrapper that negates the scores.
pub fn assign_max_score(scores: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let costs: Vec<f64> = scores.iter().map(|s| -s).collect();
    assign_min_cost(&costs, rows, cols)
}

// Requires n <= m. 1-based potentials formulation.
fn solve(a: &[f64], n: usize, m: usize) -> Vec<(usize, usize)> {
    let cost = |i: usize, j: usize| a[(i - 1) * m + (j - 1)];
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
                let cur = cost(i0, j) - u[i0] - v[j];
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
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}
