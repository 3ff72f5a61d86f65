//! Primal network simplex for the transportation problem.
//!
//! The spanning tree is stored with parent/thread/successor-count arrays and
//! an artificial root joined to every node, in the style of LEMON's
//! `NetworkSimplex`. Entering arcs are chosen by block search. All transport
//! arcs are uncapacitated, so only arcs whose flow decreases along the pivot
//! cycle can leave the tree.

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const NONE: usize = usize::MAX;

/// Optimal flows `(i, j, mass)` between supplies `a` and demands `b`.
///
/// Zero-weight atoms are dropped before solving. Entries with zero flow are
/// omitted from the result.
pub fn solve(a: &[f64], b: &[f64], cost: &CostMatrix) -> Result<Vec<(usize, usize, f64)>> {
    if a.len() != cost.rows() || b.len() != cost.cols() {
        return Err(Error::Shape("weights do not match the cost matrix".into()));
    }
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::Parameter("measure has zero total weight".into()));
    }
    let sub = CostMatrix::from_fn(rows.len(), cols.len(), |i, j| cost.get(rows[i], cols[j]));
    if let Some(c) = sub.as_slice().iter().find(|c| !c.is_finite()) {
        return Err(Error::Parameter(format!("non-finite transport cost {c}")));
    }
    let supply_a: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let supply_b: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let mut ns = Simplex::new(&supply_a, &supply_b, &sub);
    ns.run()?;
    Ok(ns
        .transport_flows()
        .into_iter()
        .map(|(i, j, m)| (rows[i], cols[j], m))
        .collect())
}

struct Simplex {
    n1: usize,
    n2: usize,
    node_num: usize,
    search_arc_num: usize,
    // Arc data; transport arc e = i * n2 + j, then one artificial arc per node.
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    artificial_source: Vec<usize>,
    artificial_target: Vec<usize>,
    // Spanning tree.
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    // Pivot bookkeeping.
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
    next_arc: usize,
    block_size: usize,
    epsilon: f64,
}

impl Simplex {
    fn new(a: &[f64], b: &[f64], cost: &CostMatrix) -> Self {
        let (n1, n2) = (a.len(), b.len());
        let node_num = n1 + n2;
        let search_arc_num = n1 * n2;
        let arc_num = search_arc_num + node_num;
        let root = node_num;
        let max_cost = cost.max();
        let art_cost = (max_cost + 1.0) * (node_num as f64 + 1.0);

        let mut s = Simplex {
            n1,
            n2,
            node_num,
            search_arc_num,
            cost: Vec::with_capacity(arc_num),
            flow: vec![0.0; arc_num],
            state: vec![STATE_LOWER; arc_num],
            artificial_source: vec![0; node_num],
            artificial_target: vec![0; node_num],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            pi: vec![0.0; node_num + 1],
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size: ((search_arc_num as f64).sqrt().ceil() as usize).max(10),
            epsilon: 1e-14 * (max_cost + 1.0),
        };
        s.cost.extend_from_slice(cost.as_slice());
        s.cost.resize(arc_num, 0.0);

        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        for u in 0..node_num {
            let e = search_arc_num + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if u < n1 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.artificial_source[u] = u;
                s.artificial_target[u] = root;
                s.flow[e] = a[u];
                s.cost[e] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.artificial_source[u] = root;
                s.artificial_target[u] = u;
                s.flow[e] = b[u - n1];
                s.cost[e] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.search_arc_num {
            e / self.n2
        } else {
            self.artificial_source[e - self.search_arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.search_arc_num {
            self.n1 + e % self.n2
        } else {
            self.artificial_target[e - self.search_arc_num]
        }
    }

    fn run(&mut self) -> Result<()> {
        // Generous cap; the pivot count is typically a small multiple of the node count.
        let max_pivots = 1000 * (self.node_num + 10) * (self.node_num + 10);
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Solver("transport problem is unbounded".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver(format!(
                    "network simplex did not terminate within {max_pivots} pivots"
                )));
            }
        }
        // Artificial arcs may keep only rounding-level flow when the totals differ slightly.
        let leftover: f64 = (self.search_arc_num..self.flow.len())
            .map(|e| self.flow[e])
            .fold(0.0, f64::max);
        if leftover > 1e-8 {
            return Err(Error::Solver(format!(
                "infeasible transport problem: {leftover:e} mass left on artificial arcs"
            )));
        }
        Ok(())
    }

    fn transport_flows(&self) -> Vec<(usize, usize, f64)> {
        (0..self.search_arc_num)
            .filter(|&e| self.flow[e] > 0.0)
            .map(|e| (e / self.n2, e % self.n2, self.flow[e]))
            .collect()
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.source(e)] - self.pi[self.target(e)]
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut best = 0.0;
        let mut cnt = self.block_size;
        let mut chosen = NONE;
        let m = self.search_arc_num;
        for k in 0..m {
            let e = (self.next_arc + k) % m;
            if self.state[e] != STATE_TREE {
                let c = f64::from(self.state[e]) * self.reduced_cost(e);
                if c < best {
                    best = c;
                    chosen = e;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if best < -self.epsilon {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if chosen == NONE || best >= -self.epsilon {
            return false;
        }
        self.in_arc = chosen;
        self.next_arc = chosen;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        // Entering arcs are always at their lower bound here.
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        // The bottleneck arc lands exactly on zero; clear rounding on it anyway.
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join) = (self.u_in, self.v_in, self.u_out, self.join);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem nodes between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0isize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] as isize - self.succ_num[p] as isize;
                self.succ_num[u] = tmp_sc as usize;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - f64::from(self.pred_dir[u_in]) * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Structural self-check of the spanning tree; used by tests.
    #[cfg(test)]
    fn check_tree(&self) {
        let root = self.node_num;
        // Thread visits every node once, starting and ending at the root.
        let mut seen = vec![false; root + 1];
        let mut u = root;
        for _ in 0..=root {
            assert!(!seen[u]);
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, root);
        for u in 0..root {
            let e = self.pred[u];
            assert_eq!(self.state[e], STATE_TREE);
            let p = self.parent[u];
            let (s, t) = (self.source(e), self.target(e));
            if self.pred_dir[u] == DIR_UP {
                assert_eq!((s, t), (u, p));
            } else {
                assert_eq!((s, t), (p, u));
            }
            assert!(self.reduced_cost(e).abs() <= 1e-9 * (1.0 + self.pi[u].abs()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::one_d;
    use proptest::prelude::*;

    fn dual_gap(a: &[f64], b: &[f64], cost: &CostMatrix) -> (f64, Vec<(usize, usize, f64)>) {
        let mut ns = Simplex::new(a, b, cost);
        ns.run().unwrap();
        ns.check_tree();
        // Nonnegative reduced costs certify optimality of the final basis.
        for e in 0..ns.search_arc_num {
            assert!(ns.reduced_cost(e) >= -1e-9, "negative reduced cost at arc {e}");
        }
        let flows = ns.transport_flows();
        let primal: f64 = flows.iter().map(|&(i, j, m)| m * cost.get(i, j)).sum();
        (primal, flows)
    }

    #[test]
    fn one_to_two() {
        let cost = CostMatrix::from_fn(1, 2, |_, _| 1.0);
        let flows = solve(&[1.0], &[0.5, 0.5], &cost).unwrap();
        assert_eq!(flows, vec![(0, 0, 0.5), (0, 1, 0.5)]);
    }

    #[test]
    fn zero_weight_atoms_are_skipped() {
        let cost = CostMatrix::from_fn(3, 2, |i, j| (i as f64 - j as f64).abs());
        let flows = solve(&[0.5, 0.0, 0.5], &[0.5, 0.5], &cost).unwrap();
        let total: f64 = flows.iter().map(|&(i, j, m)| m * cost.get(i, j)).sum();
        assert!((total - 0.5).abs() < 1e-15);
        assert!(flows.iter().all(|&(i, _, _)| i != 1));
    }

    #[test]
    fn matches_assignment_on_uniform_instances() {
        use crate::geometry::{pairwise_cost, ManifoldSpec};
        use crate::rng::stream;
        for seed in 0..10 {
            let x = ManifoldSpec::UnitSquare.sample(40, &mut stream(seed, 0)).unwrap();
            let y = ManifoldSpec::UnitSquare.sample(40, &mut stream(seed, 1)).unwrap();
            let cost = pairwise_cost(&x, &y, 1.0).unwrap();
            let w = vec![1.0 / 40.0; 40];
            let (primal, _) = dual_gap(&w, &w, &cost);
            let assign = crate::transport::assignment::solve(&cost).unwrap();
            let lap: f64 = assign.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>() / 40.0;
            assert!((primal - lap).abs() < 1e-12, "{primal} vs {lap}");
        }
    }

    fn arb_weights(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01..1.0f64, 1..max_n).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn weighted_1d_matches_quantile_formula(
            a in arb_weights(12), b in arb_weights(12),
            xs in prop::collection::vec(-3.0..3.0f64, 12),
            ys in prop::collection::vec(-3.0..3.0f64, 12),
        ) {
            let xs = &xs[..a.len()];
            let ys = &ys[..b.len()];
            for p in [1.0, 2.0] {
                let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| (xs[i] - ys[j]).abs().powf(p));
                let (primal, flows) = dual_gap(&a, &b, &cost);
                let oracle = one_d::wasserstein_1d(xs, &a, ys, &b, p).unwrap().powf(p);
                prop_assert!((primal - oracle).abs() <= 1e-9, "p={} {} vs {}", p, primal, oracle);
                let mut rows = vec![0.0; a.len()];
                let mut cols = vec![0.0; b.len()];
                for (i, j, m) in flows { rows[i] += m; cols[j] += m; }
                for (r, w) in rows.iter().zip(&a) { prop_assert!((r - w).abs() <= 1e-9); }
                for (c, w) in cols.iter().zip(&b) { prop_assert!((c - w).abs() <= 1e-9); }
            }
        }

        #[test]
        fn random_costs_certify_optimality(
            a in arb_weights(9), b in arb_weights(9),
            vals in prop::collection::vec(0u8..4, 81),
        ) {
            // Integer costs force many degenerate pivots.
            let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| vals[i * 9 + j] as f64);
            dual_gap(&a, &b, &cost);
        }
    }
}
