//! Exact and entropic optimal transport between empirical measures.
//!
//! Exact problems go through [`assignment`] when both measures are uniform
//! with the same number of atoms, and through [`network_simplex`] otherwise.
//! [`entropic`] solves the regularized problem with log-domain Sinkhorn
//! iterations.

pub mod assignment;
pub mod entropic;
pub mod network_simplex;
pub mod one_d;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dims, ground_cost, pairwise_cost, CostMatrix, PointCloud};

pub use one_d::{wasserstein_1d, w1_atoms_vs_cells};

/// Tolerance on the total mass of a measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Tolerance on plan marginals.
pub const MARGINAL_TOL: f64 = 1e-7;

/// A finite weighted point set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    support: PointCloud,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(support: PointCloud, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} support points",
                weights.len(),
                support.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Parameter(format!("weight {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::Parameter("measure has zero total weight".into()));
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { support, weights })
    }

    /// Uniform weights `1/n` on every point.
    pub fn uniform(support: PointCloud) -> Self {
        let n = support.len();
        Self {
            support,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Normalizes arbitrary nonnegative masses to a probability measure.
    pub fn from_masses(support: PointCloud, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Parameter("measure has zero total weight".into()));
        }
        Self::new(support, masses.into_iter().map(|m| m / total).collect())
    }

    pub fn support(&self) -> &PointCloud {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    /// True when every weight is `1/n` up to rounding.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= 1e-12 * u)
    }
}

/// A coupling stored as its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl TransportPlan {
    /// Builds a plan and checks it against the expected marginals.
    pub fn new(
        entries: Vec<(usize, usize, f64)>,
        row_marginal: Vec<f64>,
        col_marginal: Vec<f64>,
    ) -> Result<Self> {
        let plan = Self {
            rows: row_marginal.len(),
            cols: col_marginal.len(),
            entries,
            row_marginal,
            col_marginal,
        };
        for &(i, j, m) in &plan.entries {
            if i >= plan.rows || j >= plan.cols {
                return Err(Error::Shape(format!(
                    "plan entry ({i}, {j}) outside a {}x{} plan",
                    plan.rows, plan.cols
                )));
            }
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Parameter(format!("plan entry ({i}, {j}) has mass {m}")));
            }
        }
        plan.check_marginals(MARGINAL_TOL)?;
        Ok(plan)
    }

    /// Builds a plan from a dense row-major matrix.
    pub fn from_dense(
        matrix: &[f64],
        row_marginal: Vec<f64>,
        col_marginal: Vec<f64>,
    ) -> Result<Self> {
        let cols = col_marginal.len();
        if matrix.len() != row_marginal.len() * cols {
            return Err(Error::Shape("dense plan size does not match marginals".into()));
        }
        let entries = matrix
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(k, &m)| (k / cols, k % cols, m))
            .collect();
        Self::new(entries, row_marginal, col_marginal)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for &(i, j, m) in &self.entries {
            out[i * self.cols + j] += m;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for &(i, _, m) in &self.entries {
            out[i] += m;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &(_, j, m) in &self.entries {
            out[j] += m;
        }
        out
    }

    /// Largest absolute deviation of the row or column sums from the marginals.
    pub fn marginal_violation(&self) -> f64 {
        let (rows, cols) = (self.row_sums(), self.col_sums());
        let row_dev = rows.iter().zip(&self.row_marginal).map(|(s, w)| (s - w).abs());
        let col_dev = cols.iter().zip(&self.col_marginal).map(|(s, w)| (s - w).abs());
        row_dev.chain(col_dev).fold(0.0, f64::max)
    }

    pub fn check_marginals(&self, tol: f64) -> Result<()> {
        let v = self.marginal_violation();
        if v > tol {
            return Err(Error::Solver(format!(
                "plan marginals violated by {v:e} (tolerance {tol:e})"
            )));
        }
        Ok(())
    }

    /// `Σ plan_ij c_ij` for a cost matrix of matching shape.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.entries.iter().map(|&(i, j, m)| m * cost.get(i, j)).sum()
    }

    /// Dense CSV: one line per row, no header.
    pub fn to_csv(&self) -> String {
        let dense = self.dense();
        let mut out = String::new();
        for row in dense.chunks(self.cols.max(1)) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Which solver [`wasserstein`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OtMethod {
    Exact,
    Entropic { reg: f64, max_iters: usize, tol: f64 },
}

/// Solver selection and cost exponent; embedded in run configs under `"ot"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtConfig {
    pub method: OtMethod,
    pub p: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            method: OtMethod::Exact,
            p: 1.0,
        }
    }
}

impl OtConfig {
    pub fn exact(p: f64) -> Self {
        Self {
            method: OtMethod::Exact,
            p,
        }
    }

    pub fn entropic(reg: f64, p: f64) -> Self {
        Self {
            method: OtMethod::Entropic {
                reg,
                max_iters: 100_000,
                tol: 1e-9,
            },
            p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Parameter(format!("cost exponent p = {} must be >= 1", self.p)));
        }
        if let OtMethod::Entropic { reg, max_iters, tol } = self.method {
            if !(reg > 0.0 && reg.is_finite()) {
                return Err(Error::Parameter(format!("entropic reg {reg} must be > 0")));
            }
            if !(tol > 0.0) {
                return Err(Error::Parameter(format!("entropic tol {tol} must be > 0")));
            }
            if max_iters == 0 {
                return Err(Error::Parameter("entropic max_iters must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Result of an OT solve.
#[derive(Debug, Clone)]
pub struct OtSolution {
    /// Optimal value of `Σ plan_ij ‖x_i - y_j‖^p` (not rooted).
    pub cost: f64,
    pub plan: TransportPlan,
}

impl OtSolution {
    /// The p-th root of the cost.
    pub fn distance(&self, p: f64) -> f64 {
        root(self.cost, p)
    }
}

pub(crate) fn root(cost: f64, p: f64) -> f64 {
    let cost = cost.max(0.0);
    if p == 1.0 {
        cost
    } else if p == 2.0 {
        cost.sqrt()
    } else {
        cost.powf(1.0 / p)
    }
}

/// Solves the transport problem between `mu` (plan rows) and `nu` (plan columns).
pub fn solve(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cfg: &OtConfig) -> Result<OtSolution> {
    cfg.validate()?;
    check_dims(mu.support(), nu.support())?;
    let cost = pairwise_cost(mu.support(), nu.support(), cfg.p)?;
    solve_with_cost(mu.weights(), nu.weights(), &cost, &cfg.method)
}

/// Solves with a precomputed cost matrix.
pub fn solve_with_cost(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    method: &OtMethod,
) -> Result<OtSolution> {
    if a.len() != cost.rows() || b.len() != cost.cols() {
        return Err(Error::Shape(format!(
            "weights of length ({}, {}) for a {}x{} cost matrix",
            a.len(),
            b.len(),
            cost.rows(),
            cost.cols()
        )));
    }
    match *method {
        OtMethod::Exact => {
            let uniform = |w: &[f64]| {
                let u = 1.0 / w.len() as f64;
                w.iter().all(|x| (x - u).abs() <= 1e-12 * u)
            };
            if a.len() == b.len() && uniform(a) && uniform(b) {
                let n = a.len();
                let assign = assignment::solve(cost)?;
                let mass = 1.0 / n as f64;
                let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
                let entries = assign.iter().enumerate().map(|(i, &j)| (i, j, mass)).collect();
                let plan = TransportPlan::new(entries, a.to_vec(), b.to_vec())?;
                Ok(OtSolution {
                    cost: total / n as f64,
                    plan,
                })
            } else {
                let flows = network_simplex::solve(a, b, cost)?;
                let total = flows.iter().map(|&(i, j, m)| m * cost.get(i, j)).sum();
                let plan = TransportPlan::new(flows, a.to_vec(), b.to_vec())?;
                Ok(OtSolution { cost: total, plan })
            }
        }
        OtMethod::Entropic { reg, max_iters, tol } => {
            let dense = entropic::sinkhorn_log(a, b, cost, reg, max_iters, tol)?;
            let plan = TransportPlan::from_dense(&dense, a.to_vec(), b.to_vec())?;
            Ok(OtSolution {
                cost: plan.cost(cost),
                plan,
            })
        }
    }
}

/// W_p between two measures (p-th root of the optimal cost) and its plan.
pub fn wasserstein(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cfg: &OtConfig,
) -> Result<(f64, TransportPlan)> {
    let sol = solve(mu, nu, cfg)?;
    Ok((sol.distance(cfg.p), sol.plan))
}

/// Exact W_p between two uniformly weighted clouds.
pub fn wasserstein_uniform(a: &PointCloud, b: &PointCloud, p: f64) -> Result<f64> {
    let mu = EmpiricalMeasure::uniform(a.clone());
    let nu = EmpiricalMeasure::uniform(b.clone());
    Ok(wasserstein(&mu, &nu, &OtConfig::exact(p))?.0)
}

/// Plan-based loss and its gradient with respect to each generated point.
///
/// The plan is held fixed. Rows index `data`, columns index `generated`.
/// Returns the unrooted value `Σ plan_ij ‖x_i - y_j‖^p` and, for every
/// generated point, `Σ_i plan_ij p ‖x_i - y_j‖^(p-2) (y_j - x_i)`; the
/// gradient contribution of a coincident pair is 0.
pub fn loss_and_gradient(
    plan: &TransportPlan,
    data: &EmpiricalMeasure,
    generated: &PointCloud,
    p: f64,
) -> Result<(f64, Vec<f64>)> {
    check_dims(data.support(), generated)?;
    if plan.rows() != data.len() || plan.cols() != generated.len() {
        return Err(Error::Shape(format!(
            "plan is {}x{} but data has {} points and generated has {}",
            plan.rows(),
            plan.cols(),
            data.len(),
            generated.len()
        )));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("cost exponent p = {p} must be >= 1")));
    }
    let dim = generated.dim();
    let mut grad = vec![0.0; generated.coords().len()];
    let mut value = 0.0;
    for &(i, j, m) in plan.entries() {
        let x = data.support().point(i);
        let y = generated.point(j);
        value += m * ground_cost(x, y, p);
        let r = crate::geometry::dist(x, y);
        if r == 0.0 {
            continue;
        }
        let scale = m * p * if p == 1.0 { 1.0 / r } else { r.powf(p - 2.0) };
        let g = &mut grad[j * dim..(j + 1) * dim];
        for k in 0..dim {
            g[k] += scale * (y[k] - x[k]);
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn cloud(pts: &[&[f64]]) -> PointCloud {
        PointCloud::from_points(pts).unwrap()
    }

    fn square(n: usize, seed: u64) -> PointCloud {
        crate::geometry::ManifoldSpec::UnitSquare
            .sample(n, &mut stream(seed, 0))
            .unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for perm in permutations(n - 1) {
            for pos in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(pos, n - 1);
                out.push(p);
            }
        }
        out
    }

    fn brute_force(a: &PointCloud, b: &PointCloud, p: f64) -> f64 {
        let n = a.len();
        let best = permutations(n)
            .iter()
            .map(|perm| {
                (0..n)
                    .map(|i| {
                        let d = a
                            .point(i)
                            .iter()
                            .zip(b.point(perm[i]))
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum::<f64>()
                            .sqrt();
                        d.powf(p)
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        (best / n as f64).powf(1.0 / p)
    }

    #[test]
    fn measure_validation() {
        let c = cloud(&[&[0.0], &[1.0]]);
        assert!(EmpiricalMeasure::new(c.clone(), vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            EmpiricalMeasure::new(c.clone(), vec![0.0, 0.0]),
            Err(Error::Parameter(_))
        ));
        assert!(EmpiricalMeasure::new(c.clone(), vec![0.7, 0.7]).is_err());
        assert!(matches!(
            EmpiricalMeasure::new(c, vec![1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let mu = EmpiricalMeasure::uniform(square(5, 3));
        let (value, plan) = wasserstein(&mu, &mu, &OtConfig::exact(1.0)).unwrap();
        assert_eq!(value, 0.0);
        assert!(plan.entries().iter().all(|&(i, j, _)| i == j));
    }


    #[test]
    fn point_mass_against_two_atoms() {
        let mu = EmpiricalMeasure::uniform(cloud(&[&[0.0]]));
        let nu = EmpiricalMeasure::uniform(cloud(&[&[-1.0], &[1.0]]));
        let (value, plan) = wasserstein(&mu, &nu, &OtConfig::exact(1.0)).unwrap();
        assert!((value - 1.0).abs() < 1e-15);
        assert_eq!(plan.dense(), vec![0.5, 0.5]);
    }

    #[test]
    fn four_point_instances_match_permutation_brute_force() {
        for seed in 0..20 {
            let a = square(4, seed);
            let b = square(4, seed + 1000);
            for p in [1.0, 2.0] {
                let w = wasserstein_uniform(&a, &b, p).unwrap();
                assert!((w - brute_force(&a, &b, p)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_hand_values() {
        let data = EmpiricalMeasure::uniform(cloud(&[&[0.0, 0.0]]));
        let gen = cloud(&[&[3.0, 4.0]]);
        let plan = TransportPlan::new(vec![(0, 0, 1.0)], vec![1.0], vec![1.0]).unwrap();
        let (v, g) = loss_and_gradient(&plan, &data, &gen, 1.0).unwrap();
        assert!((v - 5.0).abs() < 1e-15);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);

        let pts = square(6, 2);
        let data = EmpiricalMeasure::uniform(pts.clone());
        let diag = TransportPlan::new(
            (0..6).map(|i| (i, i, 1.0 / 6.0)).collect(),
            vec![1.0 / 6.0; 6],
            vec![1.0 / 6.0; 6],
        )
        .unwrap();
        let (v, g) = loss_and_gradient(&diag, &data, &pts, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, p) in [(1u64, 1.0), (2, 2.0), (3, 1.5)] {
            let data = EmpiricalMeasure::uniform(square(5, seed));
            let gen = square(7, seed + 50);
            let (_, plan) = wasserstein(&data, &EmpiricalMeasure::uniform(gen.clone()), &OtConfig::exact(p))
                .unwrap();
            let (_, grad) = loss_and_gradient(&plan, &data, &gen, p).unwrap();
            let h = 1e-6;
            for k in 0..gen.coords().len() {
                let mut plus = gen.coords().to_vec();
                let mut minus = plus.clone();
                plus[k] += h;
                minus[k] -= h;
                let f = |c: Vec<f64>| {
                    loss_and_gradient(&plan, &data, &PointCloud::new(2, c).unwrap(), p)
                        .unwrap()
                        .0
                };
                let fd = (f(plus) - f(minus)) / (2.0 * h);
                let err = (fd - grad[k]).abs() / grad[k].abs().max(1e-8);
                assert!(err <= 1e-5, "k={k} fd={fd} analytic={}", grad[k]);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let data = EmpiricalMeasure::uniform(cloud(&[&[0.0, 0.0]]));
        let gen = cloud(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let plan = TransportPlan::new(vec![(0, 0, 1.0)], vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            loss_and_gradient(&plan, &data, &gen, 1.0),
            Err(Error::Shape(_))
        ));
        let other = EmpiricalMeasure::uniform(cloud(&[&[0.0]]));
        assert!(matches!(
            wasserstein(&data, &other, &OtConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn plan_csv_is_dense() {
        let plan = TransportPlan::new(vec![(0, 1, 1.0)], vec![1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(plan.to_csv(), "0.0,1.0\n");
    }

    #[test]
    fn ot_config_json() {
        let cfg = OtConfig::entropic(0.1, 2.0);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<OtConfig>(&text).unwrap(), cfg);
        let exact: OtConfig = serde_json::from_str(r#"{"method": {"kind": "exact"}, "p": 1.0}"#).unwrap();
        assert_eq!(exact, OtConfig::default());
        assert!(OtConfig::entropic(0.0, 1.0).validate().is_err());
    }

    fn arb_measure(dim: usize, max_n: usize) -> impl Strategy<Value = EmpiricalMeasure> {
        prop::collection::vec((prop::collection::vec(-1.0..1.0f64, dim), 0.05..1.0f64), 1..max_n)
            .prop_map(|atoms| {
                let pts: Vec<Vec<f64>> = atoms.iter().map(|(p, _)| p.clone()).collect();
                let masses = atoms.iter().map(|(_, w)| *w).collect();
                EmpiricalMeasure::from_masses(PointCloud::from_points(&pts).unwrap(), masses).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_is_symmetric(mu in arb_measure(2, 9), nu in arb_measure(2, 9)) {
            for p in [1.0, 2.0] {
                let ab = wasserstein(&mu, &nu, &OtConfig::exact(p)).unwrap().0;
                let ba = wasserstein(&nu, &mu, &OtConfig::exact(p)).unwrap().0;
                prop_assert!((ab - ba).abs() <= 1e-9);
            }
        }

        #[test]
        fn exact_obeys_triangle_inequality(
            a in arb_measure(2, 8), b in arb_measure(2, 8), c in arb_measure(2, 8)
        ) {
            for p in [1.0, 2.0] {
                let cfg = OtConfig::exact(p);
                let ab = wasserstein(&a, &b, &cfg).unwrap().0;
                let bc = wasserstein(&b, &c, &cfg).unwrap().0;
                let ac = wasserstein(&a, &c, &cfg).unwrap().0;
                prop_assert!(ab + bc - ac >= -1e-8);
            }
        }

        #[test]
        fn self_distance_zero_and_disjoint_positive(mu in arb_measure(2, 9)) {
            let cfg = OtConfig::exact(1.0);
            prop_assert!(wasserstein(&mu, &mu, &cfg).unwrap().0.abs() <= 1e-12);
            let shifted: Vec<f64> = mu.support().coords().iter().map(|c| c + 5.0).collect();
            let nu = EmpiricalMeasure::new(
                PointCloud::new(2, shifted).unwrap(), mu.weights().to_vec()).unwrap();
            prop_assert!(wasserstein(&mu, &nu, &cfg).unwrap().0 > 0.0);
        }

        #[test]
        fn w1_never_exceeds_w2(mu in arb_measure(3, 9), nu in arb_measure(3, 9)) {
            let w1 = wasserstein(&mu, &nu, &OtConfig::exact(1.0)).unwrap().0;
            let w2 = wasserstein(&mu, &nu, &OtConfig::exact(2.0)).unwrap().0;
            prop_assert!(w1 <= w2 + 1e-9);
        }

        #[test]
        fn plans_satisfy_marginals(mu in arb_measure(2, 10), nu in arb_measure(2, 10)) {
            for cfg in [OtConfig::exact(1.0), OtConfig::entropic(0.5, 1.0)] {
                let (_, plan) = wasserstein(&mu, &nu, &cfg).unwrap();
                prop_assert!(plan.marginal_violation() <= MARGINAL_TOL);
                prop_assert!(plan.entries().iter().all(|e| e.2 >= 0.0));
            }
        }
    }
}
