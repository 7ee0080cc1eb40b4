//! Optimal one-to-one bud to branch assignment.
//!
//! Scores are maximized by negating them into costs. Every bud gets its own
//! dummy column carrying the unmatched logit, which turns the problem into a
//! rectangular `n x (m + n)` instance solved by the shortest augmenting path
//! form of the Hungarian algorithm. Masked entries are never selected.

use crate::error::{Error, Result};
use crate::types::{Assignment, ScoreMatrix, MASKED};

/// Largest row count accepted by [`brute_force_assign`].
pub const BRUTE_FORCE_MAX_ROWS: usize = 8;

fn is_masked(v: f64) -> bool {
    v <= MASKED
}

/// Maximizes the total score subject to one bud per branch; each bud may
/// instead take the unmatched logit. An absent unmatched logit behaves like
/// a masked entry of last resort.
pub fn hungarian_assign(scores: &ScoreMatrix) -> Assignment {
    let n = scores.rows();
    let m = scores.cols();
    if n == 0 {
        return Assignment::default();
    }
    let unmatched_cost = -scores.unmatched.unwrap_or(MASKED);
    let width = m + n;
    // 1-based indexing throughout; column 0 / row 0 are sentinels.
    let cost = |i: usize, j: usize| -> Option<f64> {
        let (r, c) = (i - 1, j - 1);
        if c < m {
            let s = scores.get(r, c);
            (!is_masked(s)).then_some(-s)
        } else if c - m == r {
            Some(unmatched_cost)
        } else {
            None
        }
    };

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; width + 1];
    let mut p = vec![0usize; width + 1];
    let mut way = vec![0usize; width + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; width + 1];
        let mut used = vec![false; width + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=width {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost(i0, j) {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "own dummy column keeps every row feasible");
            for j in 0..=width {
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

    let mut matches = vec![None; n];
    for j in 1..=m {
        if p[j] > 0 {
            matches[p[j] - 1] = Some(j - 1);
        }
    }
    Assignment { matches }
}

/// Exhaustive optimum over all partial injections, for cross-checking.
pub fn brute_force_assign(scores: &ScoreMatrix) -> Result<Assignment> {
    let n = scores.rows();
    if n > BRUTE_FORCE_MAX_ROWS {
        return Err(Error::InvalidInput(format!(
            "brute force limited to {BRUTE_FORCE_MAX_ROWS} rows, got {n}"
        )));
    }
    let mut best = (f64::NEG_INFINITY, vec![None; n]);
    let mut current = vec![None; n];
    let mut taken = vec![false; scores.cols()];
    search(scores, 0, &mut current, &mut taken, &mut best);
    Ok(Assignment { matches: best.1 })
}

fn search(
    scores: &ScoreMatrix,
    row: usize,
    current: &mut Vec<Option<usize>>,
    taken: &mut Vec<bool>,
    best: &mut (f64, Vec<Option<usize>>),
) {
    if row == scores.rows() {
        // Re-sum in row order so totals compare exactly with other solvers.
        let total = Assignment {
            matches: current.clone(),
        }
        .total_score(scores);
        if total > best.0 {
            *best = (total, current.clone());
        }
        return;
    }
    for j in 0..scores.cols() {
        let s = scores.get(row, j);
        if taken[j] || is_masked(s) {
            continue;
        }
        taken[j] = true;
        current[row] = Some(j);
        search(scores, row + 1, current, taken, best);
        taken[j] = false;
    }
    current[row] = None;
    search(scores, row + 1, current, taken, best);
}
