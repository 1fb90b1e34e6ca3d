/// Minimum-cost assignment on a rectangular cost matrix (rows of equal
/// length). Returns the column assigned to each row; with more rows than
/// columns some rows stay unassigned. Shortest augmenting paths with
/// potentials, `O(n^2 m)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let mut out = vec![None; rows];
        for (j, i) in hungarian(&t).into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return out;
    }
    // 1-based arrays; column 0 is the virtual start.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(cost: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[i][j])).sum()
    }

    /// Exhaustive minimum over injective row-to-column maps.
    fn brute(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>, need: usize) -> f64 {
            if need == 0 {
                return 0.0;
            }
            if i == cost.len() {
                return f64::INFINITY;
            }
            let mut best = if cost.len() - i > need { rec(cost, i + 1, used, need) } else { f64::INFINITY };
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i][j] + rec(cost, i + 1, used, need - 1));
                    used[j] = false;
                }
            }
            best
        }
        let cols = cost[0].len();
        rec(cost, 0, &mut vec![false; cols], cost.len().min(cols))
    }

    #[test]
    fn small_square() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&c);
        assert_eq!(total(&c, &a), 5.0);
    }

    #[test]
    fn empty() {
        assert!(hungarian(&[]).is_empty());
        assert_eq!(hungarian(&[vec![], vec![]]), vec![None, None]);
    }

    proptest! {
        #[test]
        fn optimal_against_exhaustive_search(
            rows in 1usize..6,
            cols in 1usize..6,
            vals in proptest::collection::vec(0.0f64..10.0, 36),
        ) {
            let c: Vec<Vec<f64>> = (0..rows).map(|i| vals[i * 6..i * 6 + cols].to_vec()).collect();
            let a = hungarian(&c);
            prop_assert_eq!(a.iter().flatten().count(), rows.min(cols));
            let mut seen = std::collections::HashSet::new();
            prop_assert!(a.iter().flatten().all(|j| seen.insert(*j)));
            prop_assert!((total(&c, &a) - brute(&c)).abs() < 1e-9);
        }
    }
}
