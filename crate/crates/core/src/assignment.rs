//! Rectangular minimum-cost assignment.

/// Minimum-total-cost one-to-one assignment for a `rows x cols` cost matrix
/// (row-major). Returns `(row, col)` pairs; `min(rows, cols)` of them.
///
/// Shortest augmenting path with potentials, O(n^2 m).
pub fn hungarian(costs: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(costs.len(), rows * cols, "cost matrix shape mismatch");
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let mut transposed = vec![0.0; costs.len()];
        for r in 0..rows {
            for c in 0..cols {
                transposed[c * rows + r] = costs[r * cols + c];
            }
        }
        let mut pairs: Vec<_> = hungarian(&transposed, cols, rows)
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }

    let (n, m) = (rows, cols);
    let cost = |i: usize, j: usize| costs[(i - 1) * m + (j - 1)];
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<_> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Repeatedly takes the globally cheapest remaining pair. Not optimal, but
/// O(nm log nm).
pub fn greedy(costs: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(costs.len(), rows * cols, "cost matrix shape mismatch");
    let mut order: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();
    order.sort_by(|a, b| {
        costs[a.0 * cols + a.1]
            .total_cmp(&costs[b.0 * cols + b.1])
            .then(a.cmp(b))
    });
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut pairs = Vec::new();
    for (r, c) in order {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            pairs.push((r, c));
        }
    }
    pairs.sort_unstable();
    pairs
}

pub fn total_cost(costs: &[f64], cols: usize, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| costs[r * cols + c]).sum()
}
