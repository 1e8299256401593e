//! Maximum-score bipartite assignment (Hungarian algorithm, rectangular).
//!
//! The solver runs the shortest-augmenting-path form of the Hungarian method
//! on the square zero-padded cost matrix `-score`, O(n^3). Among all optimal
//! assignments the one with the lexicographically smallest column sequence
//! (rows in order, dummy columns ranked last) is returned; it is found by
//! walking the tight-edge subgraph left behind by the optimal duals. Pairs
//! with score exactly zero are dropped from the result.

use crate::error::{Error, Result};

/// Reduced costs at or below this are treated as tight.
const TIGHT_EPS: f64 = 1e-12;

/// Row-major table of pairwise scores in `[0, 1]`. Rows are the ground-truth
/// side, columns the prediction side.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} scores for a {rows}x{cols} matrix",
                scores.len()
            )));
        }
        for &s in &scores {
            if !s.is_finite() {
                return Err(Error::NonFinite("score matrix"));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::OutOfRange(format!("score {s} outside [0, 1]")));
            }
        }
        Ok(Self { rows, cols, scores })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut scores = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                scores.push(f(r, c));
            }
        }
        Self::new(rows, cols, scores)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }
}

/// One-to-one pairing of rows and columns.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Matching {
    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }

    pub fn row_of(&self, col: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == col).map(|p| p.0)
    }
}

/// Finds the assignment maximizing the summed score.
pub fn solve_max_assignment(m: &ScoreMatrix) -> Matching {
    let n = m.rows.max(m.cols);
    if m.rows == 0 || m.cols == 0 {
        return Matching::default();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < m.rows && j < m.cols {
            -m.get(i, j)
        } else {
            0.0
        }
    };

    // Potentials and matching are 1-indexed; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
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
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
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

    // Switch to 0-indexed matching arrays.
    let mut col_of = vec![0usize; n];
    let mut row_at = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of_col[j] - 1] = j - 1;
        row_at[j - 1] = row_of_col[j] - 1;
    }
    let tight = |i: usize, j: usize| cost(i, j) - u[i + 1] - v[j + 1] <= TIGHT_EPS;

    lexicographic_refine(m.rows, m.cols, n, &tight, &mut col_of, &mut row_at);

    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, &j) in col_of.iter().enumerate().take(m.rows) {
        if j < m.cols {
            let s = m.get(i, j);
            if s > 0.0 {
                pairs.push((i, j));
                total += s;
            }
        }
    }
    Matching { pairs, total }
}

/// Rewrites a perfect matching inside the tight subgraph into the
/// lexicographically smallest one, fixing rows greedily in order.
fn lexicographic_refine(
    rows: usize,
    cols: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_of: &mut [usize],
    row_at: &mut [usize],
) {
    let mut col_fixed = vec![false; n];
    let mut row_fixed = vec![false; n];
    for i in 0..rows {
        let cur = col_of[i];
        let limit = cur.min(cols);
        for j in 0..limit {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if let Some(path) = alternating_path(i, j, n, tight, col_of, row_at, &row_fixed, &col_fixed) {
                for (x, c) in path {
                    col_of[x] = c;
                    row_at[c] = x;
                }
                col_of[i] = j;
                row_at[j] = i;
                break;
            }
        }
        row_fixed[i] = true;
        col_fixed[col_of[i]] = true;
    }
}

/// Searches for a re-routing that lets row `i` take column `j`: the row now
/// holding `j` moves along tight edges until someone lands on `i`'s current
/// column. Returns the `(row, new_col)` moves.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    i: usize,
    j: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_of: &[usize],
    row_at: &[usize],
    row_fixed: &[bool],
    col_fixed: &[bool],
) -> Option<Vec<(usize, usize)>> {
    let target = col_of[i];
    let start = row_at[j];
    debug_assert!(!row_fixed[start]);
    // parent[c] = row that would move into column c.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut seen_row = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    seen_row[start] = true;
    while let Some(x) = queue.pop_front() {
        for c in 0..n {
            if c == j || col_fixed[c] || parent[c].is_some() || c == col_of[x] || !tight(x, c) {
                continue;
            }
            parent[c] = Some(x);
            if c == target {
                let mut moves = Vec::new();
                let mut col = c;
                loop {
                    let row = parent[col].expect("path parent");
                    moves.push((row, col));
                    if row == start {
                        return Some(moves);
                    }
                    col = col_of[row];
                }
            }
            let next = row_at[c];
            if next != i && !row_fixed[next] && !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}
