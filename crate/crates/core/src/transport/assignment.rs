//! Linear assignment (Jonker–Volgenant).
//!
//! Column reduction followed by shortest augmenting paths for the rows that
//! are still free. O(n³) worst case. The augmenting row reduction pass of the
//! original method is left out: on dense Euclidean instances of a few hundred
//! points it costs several times more than the augmentations it saves.
//!
//! Large instances get their starting column prices from an ε-scaling auction
//! instead of column reduction. Those prices are nearly optimal, so the
//! augmenting paths that follow are short. The augmentation phase alone
//! decides the matching, which stays exact.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;

const NONE: usize = usize::MAX;
/// Below this size column reduction is used for the starting prices.
const AUCTION_MIN_SIZE: usize = 64;
/// First auction ε as a fraction of the largest cost.
const AUCTION_START: f64 = 0.125;
/// ε shrink factor between auction phases.
const AUCTION_FACTOR: f64 = 6.0;
/// Last auction ε as a fraction of the largest cost.
const AUCTION_FINAL: f64 = 1e-6;

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `assign` with row `i` matched to column `assign[i]`.
pub fn solve(cost: &CostMatrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if n != cost.cols() {
        return Err(Error::Shape(format!(
            "assignment needs a square cost matrix, got {}x{}",
            n,
            cost.cols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(c) = cost.as_slice().iter().find(|c| !c.is_finite()) {
        return Err(Error::Parameter(format!("non-finite assignment cost {c}")));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    if n >= AUCTION_MIN_SIZE {
        return Ok(solve_with_auction(cost));
    }
    Ok(solve_dense(cost))
}

/// Column reduction then augmentation; `cost` must be square and finite.
pub fn solve_dense(cost: &CostMatrix) -> Vec<usize> {
    let mut lap = Lap::new(cost);
    for i in lap.column_reduction() {
        lap.augment(i);
    }
    debug_assert!(lap.row_to_col.iter().all(|&j| j != NONE));
    lap.row_to_col
}

/// Auction prices then augmentation from every row; `cost` must be square
/// and finite.
pub fn solve_with_auction(cost: &CostMatrix) -> Vec<usize> {
    let mut lap = Lap::new(cost);
    // With all rows free any prices are dual feasible.
    lap.v = auction_prices(cost);
    for i in 0..lap.n {
        lap.augment(i);
    }
    debug_assert!(lap.row_to_col.iter().all(|&j| j != NONE));
    lap.row_to_col
}

/// Forward auction with ε-scaling, minimization form. Returns the negated
/// final prices, which play the role of column potentials.
fn auction_prices(cost: &CostMatrix) -> Vec<f64> {
    let n = cost.rows();
    let cmax = cost.max();
    let mut price = vec![0.0; n];
    if cmax <= 0.0 || n < 2 {
        return price;
    }
    let mut owner = vec![NONE; n];
    let mut eps = cmax * AUCTION_START;
    let eps_min = cmax * AUCTION_FINAL;
    let mut queue = VecDeque::with_capacity(n);
    loop {
        owner.fill(NONE);
        queue.extend(0..n);
        while let Some(i) = queue.pop_front() {
            let (mut b1, mut j1, mut b2) = (f64::INFINITY, 0, f64::INFINITY);
            for (j, (&cij, &pj)) in cost.row(i).iter().zip(&price).enumerate() {
                let w = cij + pj;
                if w < b2 {
                    if w < b1 {
                        b2 = b1;
                        b1 = w;
                        j1 = j;
                    } else {
                        b2 = w;
                    }
                }
            }
            price[j1] += b2 - b1 + eps;
            let prev = std::mem::replace(&mut owner[j1], i);
            if prev != NONE {
                queue.push_back(prev);
            }
        }
        if eps <= eps_min {
            break;
        }
        eps = (eps / AUCTION_FACTOR).max(eps_min);
    }
    price.iter().map(|p| -p).collect()
}

struct Lap<'a> {
    n: usize,
    c: &'a [f64],
    row_to_col: Vec<usize>,
    col_to_row: Vec<usize>,
    v: Vec<f64>,
    // Scratch for the shortest-path phase.
    d: Vec<f64>,
    pred: Vec<usize>,
    cols: Vec<usize>,
}

impl<'a> Lap<'a> {
    fn new(cost: &'a CostMatrix) -> Self {
        let n = cost.rows();
        Self {
            n,
            c: cost.as_slice(),
            row_to_col: vec![NONE; n],
            col_to_row: vec![NONE; n],
            v: vec![0.0; n],
            d: vec![0.0; n],
            pred: vec![0; n],
            cols: (0..n).collect(),
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [f64] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    /// Column minima as initial prices; each row keeps at most one of the
    /// columns it minimizes. Returns the rows left free.
    fn column_reduction(&mut self) -> Vec<usize> {
        let n = self.n;
        let mut argmin = vec![0usize; n];
        self.v.fill(f64::INFINITY);
        for i in 0..n {
            let row = self.row(i);
            for j in 0..n {
                if row[j] < self.v[j] {
                    self.v[j] = row[j];
                    argmin[j] = i;
                }
            }
        }
        for j in (0..n).rev() {
            let i = argmin[j];
            if self.row_to_col[i] == NONE {
                self.row_to_col[i] = j;
                self.col_to_row[j] = i;
            }
        }
        (0..n).filter(|&i| self.row_to_col[i] == NONE).collect()
    }

    /// Shortest augmenting path from free row `start` (Dijkstra on reduced
    /// costs), then price update and path flip.
    fn augment(&mut self, start: usize) {
        let n = self.n;
        let row = self.row(start);
        for j in 0..n {
            self.cols[j] = j;
            self.pred[j] = start;
            self.d[j] = row[j] - self.v[j];
        }
        // cols[..ready] are finalized, cols[ready..todo] share the current
        // minimum distance and await scanning, cols[todo..] are unreached.
        let mut ready = 0;
        let mut lo = 0;
        let mut hi = 0;
        let end = loop {
            if lo == hi {
                ready = lo;
                hi = self.collect_minimum(lo);
                if let Some(j) = (lo..hi).map(|k| self.cols[k]).find(|&j| self.col_to_row[j] == NONE) {
                    break j;
                }
            }
            if let Some(j) = self.scan(&mut lo, &mut hi) {
                break j;
            }
        };
        let dist = self.d[end];
        for k in 0..ready {
            let j = self.cols[k];
            self.v[j] += self.d[j] - dist;
        }
        let mut j = end;
        loop {
            let i = self.pred[j];
            self.col_to_row[j] = i;
            let prev = self.row_to_col[i];
            self.row_to_col[i] = j;
            if i == start {
                break;
            }
            j = prev;
        }
    }

    /// Moves every unreached column at minimum distance to `cols[lo..hi]`.
    fn collect_minimum(&mut self, lo: usize) -> usize {
        let mut hi = lo + 1;
        let mut best = self.d[self.cols[lo]];
        for k in lo + 1..self.n {
            let j = self.cols[k];
            let dj = self.d[j];
            if dj <= best {
                if dj < best {
                    hi = lo;
                    best = dj;
                }
                self.cols[k] = self.cols[hi];
                self.cols[hi] = j;
                hi += 1;
            }
        }
        hi
    }

    fn scan(&mut self, lo: &mut usize, hi: &mut usize) -> Option<usize> {
        while *lo != *hi {
            let j = self.cols[*lo];
            *lo += 1;
            let i = self.col_to_row[j];
            let best = self.d[j];
            let row = self.row(i);
            let h = row[j] - self.v[j] - best;
            for k in *hi..self.n {
                let j = self.cols[k];
                let reduced = row[j] - self.v[j] - h;
                if reduced < self.d[j] {
                    self.d[j] = reduced;
                    self.pred[j] = i;
                    if reduced == best {
                        if self.col_to_row[j] == NONE {
                            return Some(j);
                        }
                        self.cols[k] = self.cols[*hi];
                        self.cols[*hi] = j;
                        *hi += 1;
                    }
                }
            }
        }
        None
    }
}
