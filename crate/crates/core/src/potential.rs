//! Harmonic potentials on the unit-resistance network of a sandpile.
//!
//! With the sink grounded, the reduced Laplacian `L` (sink row and column
//! deleted) is symmetric positive definite. Solving `L x = e_w` gives the
//! Green's function column of `w`; the harmonic potential with pole `w` is
//! `x / x[w]`, and `x[w]` is the effective resistance between `w` and the sink.

use std::collections::HashMap;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::engine::{Configuration, Grains, StabilizationResult};
use crate::error::{Result, SandlabError};
use crate::graph::{SandpileGraph, VertexId};

/// Ordinary-vertex count below which the sparse Cholesky path is used.
pub const DIRECT_LIMIT: usize = 5_000;
/// Maximum harmonicity defect accepted from any solve.
pub const HARMONIC_TOLERANCE: f64 = 1e-10;
/// Slack allowed on dual constraints, relative to the largest dual value.
pub const DUAL_TOLERANCE: f64 = 1e-9;
/// Potentials below this are indistinguishable from solver noise.
pub const POLE_SCALE_FLOOR: f64 = 1e-12;

enum Backend {
    Direct(CscCholesky<f64>),
    Iterative,
}

/// Factorized (or iterative) solver for one sandpile graph.
///
/// Solves are independent; the solver can be shared across threads.
pub struct PotentialSolver<'g> {
    g: &'g SandpileGraph,
    row: Vec<Option<usize>>,
    vertex: Vec<VertexId>,
    backend: Backend,
}

impl<'g> PotentialSolver<'g> {
    pub fn new(g: &'g SandpileGraph) -> Result<Self> {
        let vertex: Vec<VertexId> = g.ordinary().collect();
        let mut row = vec![None; g.vertex_count()];
        for (i, &v) in vertex.iter().enumerate() {
            row[v] = Some(i);
        }
        let backend = if vertex.len() < DIRECT_LIMIT {
            let n = vertex.len();
            let mut coo = CooMatrix::new(n, n);
            for (i, &v) in vertex.iter().enumerate() {
                coo.push(i, i, g.degree(v) as f64);
                for &(u, m) in g.neighbors(v) {
                    if let Some(j) = row[u] {
                        coo.push(i, j, -(m as f64));
                    }
                }
            }
            let csc = CscMatrix::from(&coo);
            let chol = CscCholesky::factor(&csc)
                .map_err(|e| SolverFailure(format!("cholesky: {e:?}")))?;
            Backend::Direct(chol)
        } else {
            Backend::Iterative
        };
        Ok(PotentialSolver { g, row, vertex, backend })
    }

    pub fn graph(&self) -> &'g SandpileGraph {
        self.g
    }

    /// `y = L x` on reduced coordinates.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, &v) in self.vertex.iter().enumerate() {
            let mut acc = self.g.degree(v) as f64 * x[i];
            for &(u, m) in self.g.neighbors(v) {
                if let Some(j) = self.row[u] {
                    acc -= m as f64 * x[j];
                }
            }
            y[i] = acc;
        }
    }

    fn solve_reduced(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Direct(chol) => {
                let rhs = DVector::from_column_slice(b);
                let mut x: Vec<f64> = chol.solve(&rhs).column(0).iter().copied().collect();
                // one step of iterative refinement
                let mut lx = vec![0.0; b.len()];
                self.apply(&x, &mut lx);
                let r: Vec<f64> = b.iter().zip(&lx).map(|(bi, li)| bi - li).collect();
                let dx = chol.solve(&DVector::from_column_slice(&r));
                for (xi, di) in x.iter_mut().zip(dx.column(0).iter()) {
                    *xi += di;
                }
                Ok(x)
            }
            Backend::Iterative => self.conjugate_gradient(b),
        }
    }

    /// Jacobi-preconditioned conjugate gradient.
    fn conjugate_gradient(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let inv_diag: Vec<f64> = self.vertex.iter().map(|&v| 1.0 / self.g.degree(v) as f64).collect();
        let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..(20 * n).max(100) {
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r_norm <= 1e-14 * b_norm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(SolverFailure("conjugate gradient did not converge".into()))
    }

    /// Column `w` of the Green's function, indexed by vertex id (sink 0).
    pub fn green_column(&self, w: VertexId) -> Result<Vec<f64>> {
        self.g.check_ordinary(w)?;
        let mut b = vec![0.0; self.vertex.len()];
        b[self.row[w].unwrap()] = 1.0;
        let x = self.solve_reduced(&b)?;
        let mut out = vec![0.0; self.g.vertex_count()];
        for (i, &v) in self.vertex.iter().enumerate() {
            out[v] = x[i];
        }
        Ok(out)
    }

    /// Harmonic potential with `pi(sink) = 0`, `pi(w) = 1`.
    pub fn potential(&self, w: VertexId) -> Result<PotentialField> {
        let green = self.green_column(w)?;
        let scale = green[w];
        if !(scale > 0.0) {
            return Err(SolverFailure(format!("non-positive diagonal at {w}")));
        }
        let mut values: Vec<f64> = green.iter().map(|x| x / scale).collect();
        values[w] = 1.0;
        values[self.g.sink()] = 0.0;
        let residual = harmonic_defect(self.g, &values, w);
        if residual > HARMONIC_TOLERANCE {
            return Err(SolverFailure(format!("harmonicity residual {residual:e}")));
        }
        Ok(PotentialField { pole: w, values, residual, resistance_to_sink: scale })
    }

    pub fn effective_resistance(&self, u: VertexId, v: VertexId) -> Result<f64> {
        if u == v {
            return Err(SandlabError::SameVertex);
        }
        for x in [u, v] {
            if x >= self.g.vertex_count() {
                return Err(SandlabError::UnknownVertex(x));
            }
        }
        let sink = self.g.sink();
        if v == sink {
            return Ok(self.green_column(u)?[u]);
        }
        if u == sink {
            return Ok(self.green_column(v)?[v]);
        }
        let gu = self.green_column(u)?;
        let gv = self.green_column(v)?;
        Ok(gu[u] + gv[v] - gu[v] - gv[u])
    }
}

#[allow(non_snake_case)]
fn SolverFailure(msg: String) -> SandlabError {
    SandlabError::SolverFailure(msg)
}

/// Largest `|pi(v) - weighted mean of neighbours|` over ordinary `v != pole`.
pub fn harmonic_defect(g: &SandpileGraph, values: &[f64], pole: VertexId) -> f64 {
    g.ordinary()
        .filter(|&v| v != pole)
        .map(|v| {
            let mean: f64 = g.neighbors(v).iter().map(|&(u, m)| m as f64 * values[u]).sum::<f64>()
                / g.degree(v) as f64;
            (values[v] - mean).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialField {
    pub pole: VertexId,
    /// Indexed by vertex id, sink included.
    pub values: Vec<f64>,
    pub residual: f64,
    /// `R_eff(pole, sink)`, the current scale of the unit-potential solve.
    pub resistance_to_sink: f64,
}

impl PotentialField {
    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    /// Sum over a vertex set.
    pub fn sum_over(&self, set: &[VertexId]) -> f64 {
        set.iter().map(|&u| self.values[u]).sum()
    }

    /// `vertex,value` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,value\n");
        for (v, x) in self.values.iter().enumerate() {
            out.push_str(&format!("{v},{x:.17e}\n"));
        }
        out
    }
}

pub fn solve_potential(g: &SandpileGraph, w: VertexId) -> Result<PotentialField> {
    PotentialSolver::new(g)?.potential(w)
}

pub fn effective_resistance(g: &SandpileGraph, u: VertexId, v: VertexId) -> Result<f64> {
    PotentialSolver::new(g)?.effective_resistance(u, v)
}

/// Reciprocity and triangle-law audit over sampled triples `(i, j, k)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialCheckReport {
    pub samples: usize,
    /// Largest `|R(s,i) pi_i(k) - R(s,k) pi_k(i)|` over samples with `i != k`.
    pub worst_reciprocity_gap: f64,
    /// Smallest `pi_i(k) - pi_i(j) pi_j(k)`; negative means violated.
    pub worst_triangle_slack: f64,
    pub tolerance: f64,
}

impl PotentialCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_reciprocity_gap <= self.tolerance && self.worst_triangle_slack >= -self.tolerance
    }
}

pub const LAW_TOLERANCE: f64 = 1e-9;

pub fn potential_checks(
    solver: &PotentialSolver<'_>,
    triples: &[(VertexId, VertexId, VertexId)],
) -> Result<PotentialCheckReport> {
    let mut cache: HashMap<VertexId, PotentialField> = HashMap::new();
    let mut field = |w: VertexId| -> Result<PotentialField> {
        if let Some(f) = cache.get(&w) {
            return Ok(f.clone());
        }
        let f = solver.potential(w)?;
        cache.insert(w, f.clone());
        Ok(f)
    };
    let mut gap: f64 = 0.0;
    let mut slack = f64::INFINITY;
    for &(i, j, k) in triples {
        let pi_i = field(i)?;
        let pi_j = field(j)?;
        let pi_k = field(k)?;
        if i != k {
            let lhs = pi_i.resistance_to_sink * pi_i.get(k);
            let rhs = pi_k.resistance_to_sink * pi_k.get(i);
            gap = gap.max((lhs - rhs).abs());
        }
        slack = slack.min(pi_i.get(k) - pi_i.get(j) * pi_j.get(k));
    }
    Ok(PotentialCheckReport {
        samples: triples.len(),
        worst_reciprocity_gap: gap,
        worst_triangle_slack: slack,
        tolerance: LAW_TOLERANCE,
    })
}

/// Bracket on the minimum number of particles at `v` that topples `w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HBounds {
    pub lower: f64,
    pub upper: f64,
    pub potential_sum: f64,
    pub pole_value: f64,
}

impl HBounds {
    pub fn contains(&self, h: f64) -> bool {
        self.lower <= h && h <= self.upper
    }
}

/// `(S / ((D+1) pi_w(v)), (D-1) S / pi_w(v))` with `S = sum_u pi_w(u)` and
/// `D` the maximum ordinary degree.
pub fn analytic_h_bounds(solver: &PotentialSolver<'_>, v: VertexId, w: VertexId) -> Result<HBounds> {
    let g = solver.graph();
    g.check_ordinary(v)?;
    let pi = solver.potential(w)?;
    let pole_value = pi.get(v);
    if pole_value < POLE_SCALE_FLOOR {
        return Err(SandlabError::PoleUnreachableScale { vertex: v, value: pole_value });
    }
    let potential_sum: f64 = g.ordinary().map(|u| pi.get(u)).sum();
    let delta = g.max_degree() as f64;
    Ok(HBounds {
        lower: potential_sum / ((delta + 1.0) * pole_value),
        upper: (delta - 1.0) * potential_sum / pole_value,
        potential_sum,
        pole_value,
    })
}

/// Feasible point of the dual program built from the scaled potential `pi_w`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualCertificate {
    /// `pi_w(u) / sum_{B} pi_w`, indexed by vertex id.
    pub y: Vec<f64>,
    /// Current injected at the pole, on the same scale.
    pub y_prime: f64,
    pub objective: f64,
    /// Largest constraint violation found while verifying.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualBound {
    pub ball: Vec<VertexId>,
    pub certificate: DualCertificate,
    /// Upper bound on the largest per-site count on the ball that leaves `w` untoppled.
    pub bound: f64,
}

/// Dual certificate for the ball of radius `r` about `v` (ordinary vertices
/// within sink-free distance `r`).
pub fn dual_h_bound(solver: &PotentialSolver<'_>, v: VertexId, r: u32, w: VertexId) -> Result<DualBound> {
    let ball = solver.graph().ordinary_ball(v, r)?;
    dual_h_bound_for_set(solver, &ball, w)
}

pub fn dual_h_bound_for_set(solver: &PotentialSolver<'_>, ball: &[VertexId], w: VertexId) -> Result<DualBound> {
    let g = solver.graph();
    if ball.is_empty() {
        return Err(SandlabError::EmptySource);
    }
    for &u in ball {
        g.check_ordinary(u)?;
    }
    let pi = solver.potential(w)?;
    let ball_sum = pi.sum_over(ball);
    if let Some(&u) = ball.iter().find(|&&u| pi.get(u) < POLE_SCALE_FLOOR) {
        return Err(SandlabError::PoleUnreachableScale { vertex: u, value: pi.get(u) });
    }
    let y: Vec<f64> = pi.values.iter().map(|x| x / ball_sum).collect();
    let inflow = |u: VertexId| -> f64 { g.neighbors(u).iter().map(|&(x, m)| m as f64 * y[x]).sum() };
    let y_prime = g.degree(w) as f64 * y[w] - inflow(w);

    let scale = 1.0 / ball_sum;
    let mut violation: f64 = 0.0;
    for u in g.ordinary() {
        violation = violation.max(-y[u]);
        let slack = inflow(u) - g.degree(u) as f64 * y[u] + if u == w { y_prime } else { 0.0 };
        violation = violation.max(-slack);
    }
    violation = violation.max(-y_prime);
    violation = violation.max(1.0 - ball.iter().map(|&u| y[u]).sum::<f64>());
    if violation > DUAL_TOLERANCE * scale.max(1.0) {
        return Err(SandlabError::InfeasibleCertificate { violation });
    }
    let objective: f64 = g.ordinary().map(|u| (g.degree(u) as f64 - 1.0) * y[u]).sum();
    Ok(DualBound {
        ball: ball.to_vec(),
        certificate: DualCertificate { y, y_prime, objective, violation },
        bound: objective,
    })
}

/// Exact check of `sigma = c - L^T z` and of particle conservation.
pub fn verify_laplacian_identity<T: Grains>(
    g: &SandpileGraph,
    c: &Configuration<T>,
    result: &StabilizationResult<T>,
) -> bool {
    let check = || -> Option<bool> {
        let sink = g.sink();
        let z = &result.score;
        if !z[sink].is_zero() {
            return Some(false);
        }
        for v in g.ordinary() {
            let mut lhs = c.get(v).clone();
            for &(u, m) in g.neighbors(v) {
                if u != sink {
                    lhs = lhs.checked_add(&z[u].checked_mul(&T::from_count(m as u64))?)?;
                }
            }
            let rhs = result
                .stable
                .get(v)
                .checked_add(&z[v].checked_mul(&T::from_count(g.degree(v)))?)?;
            if lhs != rhs {
                return Some(false);
            }
        }
        let mut absorbed = T::zero();
        for v in g.ordinary() {
            absorbed = absorbed.checked_add(&z[v].checked_mul(&T::from_count(g.sink_multiplicity(v)))?)?;
        }
        let before = c.weight().ok()?;
        let after = result.stable.weight().ok()?;
        Some(absorbed == result.sink_absorbed && before == after.checked_add(&absorbed)?)
    };
    check().unwrap_or(false)
}

/// Determinant of the reduced Laplacian, i.e. the spanning-tree count,
/// by fraction-free (Bareiss) elimination.
pub fn spanning_tree_count(g: &SandpileGraph) -> BigInt {
    let vertex: Vec<VertexId> = g.ordinary().collect();
    let n = vertex.len();
    let mut row = vec![None; g.vertex_count()];
    for (i, &v) in vertex.iter().enumerate() {
        row[v] = Some(i);
    }
    let mut a = vec![vec![BigInt::zero(); n]; n];
    for (i, &v) in vertex.iter().enumerate() {
        a[i][i] = BigInt::from(g.degree(v));
        for &(u, m) in g.neighbors(v) {
            if let Some(j) = row[u] {
                a[i][j] -= BigInt::from(m);
            }
        }
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(p) => {
                    a.swap(k, p);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = t / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    if n == 0 {
        BigInt::one()
    } else {
        sign * &a[n - 1][n - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{stabilize, TopplingPolicy};
    use crate::graph::{gen_family, Family};

    fn at(g: &SandpileGraph, x: i64, y: i64) -> VertexId {
        g.vertex_at((x, y)).unwrap()
    }

    #[test]
    fn grid2_potential_is_exact() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let pi = solve_potential(&g, at(&g, 0, 0)).unwrap();
        assert_eq!(pi.get(at(&g, 0, 0)), 1.0);
        assert_eq!(pi.get(g.sink()), 0.0);
        assert!((pi.get(at(&g, 1, 0)) - 2.0 / 7.0).abs() < 1e-12);
        assert!((pi.get(at(&g, 0, 1)) - 2.0 / 7.0).abs() < 1e-12);
        assert!((pi.get(at(&g, 1, 1)) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn interior_values_strictly_between_poles() {
        let g = gen_family(Family::Grid { n: 3 }).unwrap();
        let w = at(&g, 1, 1);
        let pi = solve_potential(&g, w).unwrap();
        assert!(g.ordinary().filter(|&v| v != w).all(|v| pi.get(v) > 0.0 && pi.get(v) < 1.0));
        assert!(pi.residual <= HARMONIC_TOLERANCE);
    }

    #[test]
    fn resistance_examples() {
        let single = gen_family(Family::Line { n: 1 }).unwrap();
        assert!((effective_resistance(&single, 0, single.sink()).unwrap() - 0.25).abs() < 1e-12);

        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let r = effective_resistance(&g, at(&g, 0, 0), g.sink()).unwrap();
        assert!((r - 7.0 / 24.0).abs() < 1e-12);

        let g4 = gen_family(Family::Grid { n: 4 }).unwrap();
        let s = PotentialSolver::new(&g4).unwrap();
        let (a, b) = (at(&g4, 0, 1), at(&g4, 3, 2));
        let ab = s.effective_resistance(a, b).unwrap();
        let ba = s.effective_resistance(b, a).unwrap();
        assert!(ab > 0.0 && (ab - ba).abs() < 1e-12);
        assert!(matches!(s.effective_resistance(a, a), Err(SandlabError::SameVertex)));
    }

    #[test]
    fn reciprocity_and_triangle_on_grid2() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let s = PotentialSolver::new(&g).unwrap();
        let (i, j, k) = (at(&g, 0, 0), at(&g, 0, 1), at(&g, 1, 1));
        let report = potential_checks(&s, &[(i, j, k), (i, i, k)]).unwrap();
        assert!(report.passed());
        // (2/7)(2/7) = 4/49 <= 1/7
        let pi_i = s.potential(i).unwrap();
        let pi_j = s.potential(j).unwrap();
        assert!((pi_i.get(j) * pi_j.get(k) - 4.0 / 49.0).abs() < 1e-12);
        assert!((pi_i.get(k) - 1.0 / 7.0).abs() < 1e-12);
        let same = potential_checks(&s, &[(i, i, k)]).unwrap();
        assert!(same.worst_triangle_slack.abs() < 1e-15);
    }

    #[test]
    fn h_bounds_on_grid2() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let s = PotentialSolver::new(&g).unwrap();
        let (v, w) = (at(&g, 1, 1), at(&g, 0, 0));
        let b = analytic_h_bounds(&s, v, w).unwrap();
        assert!((b.potential_sum - 12.0 / 7.0).abs() < 1e-12);
        assert!((b.lower - 12.0 / 5.0).abs() < 1e-12);
        assert!((b.upper - 36.0).abs() < 1e-10);
        assert!(b.contains(30.0));

        let own = analytic_h_bounds(&s, w, w).unwrap();
        assert!((own.lower - 12.0 / 35.0).abs() < 1e-12);
        assert!((own.upper - 36.0 / 7.0).abs() < 1e-12);
        assert!(own.contains(4.0));
    }

    #[test]
    fn dual_bounds_on_grid2() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let s = PotentialSolver::new(&g).unwrap();
        let w = at(&g, 0, 0);
        let far = dual_h_bound(&s, at(&g, 1, 1), 1, w).unwrap();
        assert_eq!(far.ball.len(), 3);
        assert!((far.bound - 36.0 / 5.0).abs() < 1e-12);
        let near = dual_h_bound(&s, w, 1, w).unwrap();
        assert!((near.bound - 36.0 / 11.0).abs() < 1e-12);
        let ysum: f64 = far.ball.iter().map(|&u| far.certificate.y[u]).sum();
        assert!((ysum - 1.0).abs() < 1e-12);
        assert!(far.certificate.y_prime > 0.0);
    }

    #[test]
    fn laplacian_identity_detects_corruption() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let c = Configuration::point(&g, at(&g, 1, 1), 30u64).unwrap();
        let mut r = stabilize(&g, &c, TopplingPolicy::Fifo).unwrap();
        assert!(verify_laplacian_identity(&g, &c, &r));
        assert_eq!(r.stable.weight().unwrap() + r.sink_absorbed, 30);
        for v in g.ordinary() {
            let mut bad = r.clone();
            bad.score[v] += 1;
            assert!(!verify_laplacian_identity(&g, &c, &bad));
        }
        let stable = Configuration::from_ordinary(&g, vec![1, 2, 3, 0]).unwrap();
        r = stabilize(&g, &stable, TopplingPolicy::Fifo).unwrap();
        assert!(verify_laplacian_identity(&g, &stable, &r));
    }

    #[test]
    fn spanning_trees() {
        let g2 = gen_family(Family::Grid { n: 2 }).unwrap();
        assert_eq!(spanning_tree_count(&g2), BigInt::from(192));
        let l2 = gen_family(Family::Line { n: 2 }).unwrap();
        assert_eq!(spanning_tree_count(&l2), BigInt::from(15));
        let single = gen_family(Family::Line { n: 1 }).unwrap();
        assert_eq!(spanning_tree_count(&single), BigInt::from(4));
    }

    #[test]
    fn iterative_path_agrees_with_direct() {
        let g = gen_family(Family::Grid { n: 12 }).unwrap();
        let direct = PotentialSolver::new(&g).unwrap();
        let iterative = PotentialSolver { backend: Backend::Iterative, ..PotentialSolver::new(&g).unwrap() };
        let w = at(&g, 3, 7);
        let a = direct.potential(w).unwrap();
        let b = iterative.potential(w).unwrap();
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "diff {diff}");
    }

    #[test]
    fn large_grid_uses_iterative_solver() {
        let g = gen_family(Family::Grid { n: 72 }).unwrap();
        let s = PotentialSolver::new(&g).unwrap();
        assert!(matches!(s.backend, Backend::Iterative));
        let pi = s.potential(at(&g, 36, 36)).unwrap();
        assert!(pi.residual <= HARMONIC_TOLERANCE);
    }
}
