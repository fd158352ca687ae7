//! Exact linear assignment via the Hungarian algorithm with potentials
//! (shortest augmenting paths, O(n^3)).

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Returns the permutation `pi` maximizing `sum_i score[i, pi(i)]` over a
/// square, nonnegative, finite score matrix. `pi[i]` is the column assigned
/// to row `i`.
pub fn best_assignment(score: &Matrix) -> Result<Vec<usize>> {
    if !score.is_square() {
        return Err(Error::NotSquare {
            rows: score.rows(),
            cols: score.cols(),
        });
    }
    score.check_finite()?;
    let n = score.rows();
    if n == 0 {
        return Ok(Vec::new());
    }

    // Hungarian minimizes; flip the sign to maximize. 1-based arrays with a
    // sentinel row/column 0 keep the augmenting-path loop compact.
    let cost = |i: usize, j: usize| -score[(i, j)];

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut match_row = vec![0usize; n + 1]; // match_row[j] = row matched to column j

    for i in 1..=n {
        match_row[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if match_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the root.
        while j0 != 0 {
            let j1 = prev[j0];
            match_row[j0] = match_row[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[match_row[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Total score collected by an assignment.
pub fn assignment_score(score: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| score[(i, j)])
        .sum()
}
