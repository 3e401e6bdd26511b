//! Forward nonlinear solves, state-transition matrices, the classical
//! Duhamel formulas and sampled Lipschitz constants.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::EvalError;
use crate::grid::{simpson, CellSeries, TimeGrid};
use crate::problem::Problem;

/// States above this sup-norm are treated as a finite-time blow-up.
pub const BLOW_UP_BOUND: f64 = 1e8;
/// Transition matrices with a larger 2-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Piecewise-constant control: `values[k]` is used on `[t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<ControlSignal> {
        if values.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "control has {} cell values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::DimensionMismatch("control values differ in length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("control values must be finite".into()));
        }
        Ok(ControlSignal { grid, values })
    }

    pub fn constant(grid: &TimeGrid, value: &[f64]) -> ControlSignal {
        ControlSignal {
            grid: grid.clone(),
            values: vec![value.to_vec(); grid.n_cells()],
        }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(grid: &TimeGrid, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<ControlSignal> {
        let values = (0..grid.n_cells()).map(|k| f(grid.mid(k))).collect();
        ControlSignal::new(grid.clone(), values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Right-open lookup; `t = T` uses the last cell.
    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.grid.cell_of(t)]
    }

    /// The same signal expressed on another grid (by cell midpoints, which is
    /// exact when `grid` refines this signal's grid).
    pub fn resample(&self, grid: &TimeGrid) -> ControlSignal {
        let values = (0..grid.n_cells())
            .map(|k| self.value_at(grid.mid(k)).to_vec())
            .collect();
        ControlSignal { grid: grid.clone(), values }
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `∫_0^T ‖u(t) − v(t)‖_∞ dt`, exact for piecewise constants.
    pub fn l1_distance(&self, other: &ControlSignal) -> f64 {
        let grid = self.grid.union_with(other.grid.nodes());
        (0..grid.n_cells())
            .map(|k| {
                let t = grid.mid(k);
                let d = self
                    .value_at(t)
                    .iter()
                    .zip(other.value_at(t))
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                d * grid.h(k)
            })
            .sum()
    }
}

/// Node samples of a continuous trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }

    /// Linear interpolation between nodes.
    pub fn at(&self, t: f64) -> DVector<f64> {
        let k = self.grid.cell_of(t);
        let s = ((t - self.grid.t(k)) / self.grid.h(k)).clamp(0.0, 1.0);
        &self.states[k] * (1.0 - s) + &self.states[k + 1] * s
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|q| q[i]).collect()
    }

    /// `max_k ‖q_k − r_k‖_∞` over shared nodes.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

fn blow_up(t: f64, norm: f64) -> Error {
    Error::BlowUp { t, norm }
}

/// RK4 on every cell of `grid` with the control frozen on each cell.
pub fn solve_forward(problem: &Problem, u: &ControlSignal, grid: &TimeGrid) -> Result<Trajectory> {
    if !grid.refines(&u.grid) {
        return Err(Error::InvalidInput(
            "the solve grid must contain every node of the control grid".into(),
        ));
    }
    if u.dim() != problem.m {
        return Err(Error::DimensionMismatch(format!(
            "control dimension {} but m = {}",
            u.dim(),
            problem.m
        )));
    }
    let mut q = DVector::from_vec(problem.q0.clone());
    let mut states = Vec::with_capacity(grid.nodes().len());
    states.push(q.clone());
    for k in 0..grid.n_cells() {
        let (t, h) = (grid.t(k), grid.h(k));
        let v = u.value_at(grid.mid(k));
        q = rk4_step(problem, &q, v, t, h).map_err(|e| match e {
            Error::Eval { t, source: EvalError::NonFinite(_) } => blow_up(t, f64::INFINITY),
            other => other,
        })?;
        let norm = q.amax();
        if !norm.is_finite() || norm > BLOW_UP_BOUND {
            return Err(blow_up(grid.t(k + 1), norm));
        }
        states.push(q.clone());
    }
    Ok(Trajectory { grid: grid.clone(), states })
}

fn rk4_step(problem: &Problem, q: &DVector<f64>, v: &[f64], t: f64, h: f64) -> Result<DVector<f64>> {
    let f = |x: &DVector<f64>, s: f64| problem.dynamics(x.as_slice(), v, s);
    let k1 = f(q, t)?;
    let k2 = f(&(q + &k1 * (0.5 * h)), t + 0.5 * h)?;
    let k3 = f(&(q + &k2 * (0.5 * h)), t + 0.5 * h)?;
    let k4 = f(&(q + &k3 * h), t + h)?;
    Ok(q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Trajectory samples at cell starts, midpoints and ends. Midpoints use the
/// cubic Hermite interpolant built from the dynamics with the cell's control.
pub fn state_cells(problem: &Problem, traj: &Trajectory, u: &ControlSignal) -> Result<CellSeries<DVector<f64>>> {
    let g = &traj.grid;
    let n = g.n_cells();
    let mut mid = Vec::with_capacity(n);
    for k in 0..n {
        let v = u.value_at(g.mid(k));
        let (q0, q1) = (&traj.states[k], &traj.states[k + 1]);
        let f0 = problem.dynamics(q0.as_slice(), v, g.t(k))?;
        let f1 = problem.dynamics(q1.as_slice(), v, g.t(k + 1))?;
        mid.push((q0 + q1) * 0.5 + (f0 - f1) * (g.h(k) / 8.0));
    }
    CellSeries::new(
        g.clone(),
        traj.states[..n].to_vec(),
        mid,
        traj.states[1..].to_vec(),
    )
}

/// `∂₁f` along a trajectory, cell by cell.
pub fn linearize(problem: &Problem, cells: &CellSeries<DVector<f64>>, u: &ControlSignal) -> Result<CellSeries<DMatrix<f64>>> {
    let g = &cells.grid;
    let n = g.n_cells();
    let mut start = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    let mut end = Vec::with_capacity(n);
    for k in 0..n {
        let v = u.value_at(g.mid(k));
        start.push(problem.jac_state(cells.start[k].as_slice(), v, g.t(k))?);
        mid.push(problem.jac_state(cells.mid[k].as_slice(), v, g.mid(k))?);
        end.push(problem.jac_state(cells.end[k].as_slice(), v, g.t(k + 1))?);
    }
    CellSeries::new(g.clone(), start, mid, end)
}

/// `Z(t_k, 0)` for the linear system `Ż = A Z`, with inverses, plus
/// Hermite midpoint values for fourth-order quadrature.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    pub grid: TimeGrid,
    a: CellSeries<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    z_inv: Vec<DMatrix<f64>>,
    z_mid: Vec<DMatrix<f64>>,
    z_mid_inv: Vec<DMatrix<f64>>,
}

fn checked_inverse(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularTransition { t, cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularTransition { t, cond })
}

impl TransitionTable {
    pub fn new(a: &CellSeries<DMatrix<f64>>) -> Result<TransitionTable> {
        let g = &a.grid;
        let n = a.start.first().map(|m| m.nrows()).unwrap_or(0);
        if a.start.iter().chain(&a.mid).chain(&a.end).any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch("A must be square with a fixed size".into()));
        }
        let cells = g.n_cells();
        let mut z = Vec::with_capacity(cells + 1);
        let mut z_mid = Vec::with_capacity(cells);
        z.push(DMatrix::identity(n, n));
        for k in 0..cells {
            let h = g.h(k);
            let zk = &z[k];
            let (a0, am, a1) = (&a.start[k], &a.mid[k], &a.end[k]);
            let k1 = a0 * zk;
            let k2 = am * (zk + &k1 * (0.5 * h));
            let k3 = am * (zk + &k2 * (0.5 * h));
            let k4 = a1 * (zk + &k3 * h);
            let next = zk + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularTransition { t: g.t(k + 1), cond: f64::INFINITY });
            }
            let mid = (zk + &next) * 0.5 + (k1 - a1 * &next) * (h / 8.0);
            z_mid.push(mid);
            z.push(next);
        }
        let z_inv = z
            .iter()
            .enumerate()
            .map(|(k, m)| checked_inverse(m, g.t(k)))
            .collect::<Result<Vec<_>>>()?;
        let z_mid_inv = z_mid
            .iter()
            .enumerate()
            .map(|(k, m)| checked_inverse(m, g.mid(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransitionTable { grid: g.clone(), a: a.clone(), z, z_inv, z_mid, z_mid_inv })
    }

    pub fn dim(&self) -> usize {
        self.z[0].nrows()
    }

    /// `Z(t_k, 0)`.
    pub fn from_origin(&self, k: usize) -> &DMatrix<f64> {
        &self.z[k]
    }

    pub fn from_origin_inverse(&self, k: usize) -> &DMatrix<f64> {
        &self.z_inv[k]
    }

    /// `Z(t_i, t_j) = Z(t_i, 0) Z(t_j, 0)⁻¹`.
    pub fn between(&self, i: usize, j: usize) -> DMatrix<f64> {
        &self.z[i] * &self.z_inv[j]
    }

    /// Largest entrywise residuals of the two integral identities
    /// `Z(t,0) = I + ∫_0^t A(τ) Z(τ,0) dτ` and
    /// `Z(t,0) = I + ∫_0^t Z(t,τ) A(τ) dτ` over all nodes.
    pub fn integral_identity_residuals(&self) -> (f64, f64) {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n);
        let mut acc1 = DMatrix::zeros(n, n);
        let mut acc2 = DMatrix::zeros(n, n);
        let (mut r1, mut r2) = (0.0f64, 0.0f64);
        for k in 0..self.grid.n_cells() {
            let h = self.grid.h(k);
            acc1 += simpson(
                h,
                &self.a.start[k] * &self.z[k],
                &self.a.mid[k] * &self.z_mid[k],
                &self.a.end[k] * &self.z[k + 1],
            );
            acc2 += simpson(
                h,
                &self.z_inv[k] * &self.a.start[k],
                &self.z_mid_inv[k] * &self.a.mid[k],
                &self.z_inv[k + 1] * &self.a.end[k],
            );
            let zk = &self.z[k + 1];
            r1 = r1.max((zk - &id - &acc1).amax());
            r2 = r2.max((zk - &id - zk * &acc2).amax());
        }
        (r1, r2)
    }

    /// Node values of the classical Duhamel solution.
    ///
    /// Forward: `q(t) = Z(t,0) q0 + ∫_0^t Z(t,s) B(s) ds`.
    /// Backward: `p(t) = Z(T,t)ᵀ p_T + ∫_t^T Z(τ,t)ᵀ B(τ) dτ`, the solution of
    /// `−ṗ = Aᵀp + B`, `p(T) = p_T`.
    pub fn duhamel(&self, b: &CellSeries<DVector<f64>>, boundary: &DVector<f64>, direction: Direction) -> Result<Trajectory> {
        self.check_series(b, boundary)?;
        let g = &self.grid;
        let cells = g.n_cells();
        let states = match direction {
            Direction::Forward => {
                let mut acc = boundary.clone();
                let mut out = Vec::with_capacity(cells + 1);
                out.push(boundary.clone());
                for k in 0..cells {
                    acc += self.forward_cell(k, &b.start[k], &b.mid[k], &b.end[k]);
                    out.push(&self.z[k + 1] * &acc);
                }
                out
            }
            Direction::Backward => {
                let mut acc = self.z[cells].transpose() * boundary;
                let mut out = vec![boundary.clone(); cells + 1];
                for k in (0..cells).rev() {
                    acc += self.backward_cell(k, &b.start[k], &b.mid[k], &b.end[k]);
                    out[k] = self.z_inv[k].transpose() * &acc;
                }
                out
            }
        };
        Ok(Trajectory { grid: g.clone(), states })
    }

    pub(crate) fn check_series(&self, b: &CellSeries<DVector<f64>>, boundary: &DVector<f64>) -> Result<()> {
        let n = self.dim();
        if b.grid != self.grid {
            return Err(Error::InvalidInput("B must be sampled on the transition grid".into()));
        }
        if boundary.len() != n || b.start.iter().chain(&b.mid).chain(&b.end).any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch(format!("vectors must have length {n}")));
        }
        Ok(())
    }

    /// Simpson approximation of `∫_cell Z(s,0)⁻¹ b(s) ds`.
    pub(crate) fn forward_cell(&self, k: usize, b0: &DVector<f64>, bm: &DVector<f64>, b1: &DVector<f64>) -> DVector<f64> {
        simpson(
            self.grid.h(k),
            &self.z_inv[k] * b0,
            &self.z_mid_inv[k] * bm,
            &self.z_inv[k + 1] * b1,
        )
    }

    /// Simpson approximation of `∫_cell Z(τ,0)ᵀ b(τ) dτ`.
    pub(crate) fn backward_cell(&self, k: usize, b0: &DVector<f64>, bm: &DVector<f64>, b1: &DVector<f64>) -> DVector<f64> {
        simpson(
            self.grid.h(k),
            self.z[k].tr_mul(b0),
            self.z_mid[k].tr_mul(bm),
            self.z[k + 1].tr_mul(b1),
        )
    }
}

/// Builds the transition table of `A`.
pub fn transition_matrix(a: &CellSeries<DMatrix<f64>>) -> Result<TransitionTable> {
    TransitionTable::new(a)
}

/// Solves `q̇ = A q + B` forward from `q(0) = boundary`, or `−ṗ = Aᵀ p + B`
/// backward from `p(T) = boundary`, through the Duhamel formulas.
pub fn duhamel_linear(
    a: &CellSeries<DMatrix<f64>>,
    b: &CellSeries<DVector<f64>>,
    boundary: &DVector<f64>,
    direction: Direction,
) -> Result<Trajectory> {
    TransitionTable::new(a)?.duhamel(b, boundary, direction)
}

/// Sampled bounds on `f`, `∂₁f` and `∂₂f` over the tube around a reference
/// trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Samples `‖f‖_∞`, `‖∂₁f‖_∞` and `‖∂₂f‖_∞` on the tube
/// `{‖x − q(t,u)‖_∞ ≤ 1, ‖v‖_∞ ≤ R}` at every node (states `q(t_k)` and
/// `q(t_k) ± e_i`; controls `u` on both adjacent cells plus the corners and
/// center of Ω, clipped to the `R`-ball) and returns `L` with
/// `C = L·e^{TL}`. A finite sample, hence a lower bound on the true sup.
pub fn estimate_lipschitz(problem: &Problem, u: &ControlSignal, r: f64, grid: &TimeGrid) -> Result<LipschitzEstimate> {
    let norm_u = u.linf_norm();
    if !(r > norm_u) {
        return Err(Error::InvalidInput(format!(
            "tube radius R = {r} must exceed the control bound {norm_u}"
        )));
    }
    let traj = solve_forward(problem, u, grid)?;
    let mut fixed: Vec<Vec<f64>> = problem.omega.corners();
    fixed.push(problem.omega.center());
    let clip = |v: &[f64]| v.iter().map(|x| x.clamp(-r, r)).collect::<Vec<f64>>();
    let fixed: Vec<Vec<f64>> = fixed.iter().map(|v| clip(v)).collect();

    let l = (0..grid.nodes().len())
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let t = grid.t(k);
            let mut controls = fixed.clone();
            controls.push(u.value_at(t).to_vec());
            if k > 0 {
                controls.push(u.value_at(grid.mid(k - 1)).to_vec());
            }
            let q = &traj.states[k];
            let mut states = vec![q.clone()];
            for i in 0..problem.n {
                for s in [-1.0, 1.0] {
                    let mut x = q.clone();
                    x[i] += s;
                    states.push(x);
                }
            }
            let mut best = 0.0f64;
            for x in &states {
                for v in &controls {
                    best = best
                        .max(problem.dynamics(x.as_slice(), v, t)?.amax())
                        .max(max_row_sum(&problem.jac_state(x.as_slice(), v, t)?))
                        .max(max_row_sum(&problem.jac_control(x.as_slice(), v, t)?));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let c = l * (problem.t_final * l).exp();
    Ok(LipschitzEstimate { r, l, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Omega;

    fn scalar(f: &str, q0: f64, t_final: f64) -> Problem {
        Problem::new(
            1,
            1,
            &[f],
            "q1",
            &[],
            Omega::Box { lo: vec![-1.0], hi: vec![1.0] },
            vec![q0],
            t_final,
        )
        .unwrap()
    }

    fn solve(p: &Problem, n: usize, u: f64) -> Result<Trajectory> {
        let g = TimeGrid::uniform(p.t_final, n).unwrap();
        solve_forward(p, &ControlSignal::constant(&g, &[u]), &g)
    }

    #[test]
    fn linear_growth_is_exact() {
        let q = solve(&scalar("u1", 0.0, 1.0), 10, 1.0).unwrap();
        assert_eq!(q.final_state()[0], 1.0);
    }

    #[test]
    fn exponential_and_rk4_order() {
        let p = scalar("q1", 1.0, 1.0);
        let e = std::f64::consts::E;
        let err = |n| (solve(&p, n, 0.3).unwrap().final_state()[0] - e).abs();
        assert!(err(100) < 1e-8);
        assert!(err(10) / err(20) >= 8.0);
    }

    #[test]
    fn blow_up_is_detected() {
        let p = scalar("q1^2", 1.0, 2.0);
        match solve(&p, 200, 0.0) {
            Err(Error::BlowUp { t, .. }) => assert!(t > 0.98 && t < 1.1, "t = {t}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn control_grid_must_be_refined() {
        let p = scalar("u1", 0.0, 1.0);
        let fine = TimeGrid::uniform(1.0, 4).unwrap();
        let coarse = TimeGrid::uniform(1.0, 3).unwrap();
        let u = ControlSignal::constant(&fine, &[1.0]);
        assert!(solve_forward(&p, &u, &coarse).is_err());
    }

    #[test]
    fn transition_examples() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let zero = CellSeries::constant(&g, DMatrix::zeros(2, 2));
        let t = TransitionTable::new(&zero).unwrap();
        assert_eq!(t.between(70, 20), DMatrix::identity(2, 2));

        let a = CellSeries::constant(&g, DMatrix::from_element(1, 1, 1.0));
        let t = TransitionTable::new(&a).unwrap();
        for (i, j) in [(100, 0), (73, 12), (5, 60)] {
            let exact = (g.t(i) - g.t(j)).exp();
            assert!(((t.between(i, j)[(0, 0)] - exact) / exact).abs() < 1e-8);
        }
        let comp = t.between(80, 30) * t.between(30, 0);
        assert!((comp - t.from_origin(80)).amax() < 1e-8);
        let (r1, r2) = t.integral_identity_residuals();
        assert!(r1 < 1e-6 && r2 < 1e-6, "{r1} {r2}");
    }

    #[test]
    fn singular_transition_rejected() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let a = CellSeries::constant(&g, DMatrix::from_row_slice(2, 2, &[-40.0, 0.0, 0.0, 0.0]));
        assert!(matches!(TransitionTable::new(&a), Err(Error::SingularTransition { .. })));
    }

    #[test]
    fn duhamel_examples() {
        let g = TimeGrid::uniform(2.0, 8).unwrap();
        let zero = CellSeries::constant(&g, DMatrix::zeros(1, 1));
        let b = CellSeries::constant(&g, DVector::from_element(1, 0.5));
        let q0 = DVector::from_element(1, 1.0);
        let fwd = duhamel_linear(&zero, &b, &q0, Direction::Forward).unwrap();
        let bwd = duhamel_linear(&zero, &b, &q0, Direction::Backward).unwrap();
        for k in 0..=8 {
            assert!((fwd.states[k][0] - (1.0 + 0.5 * g.t(k))).abs() < 1e-14);
            assert!((bwd.states[k][0] - (1.0 + 0.5 * (2.0 - g.t(k)))).abs() < 1e-14);
        }

        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let one = CellSeries::constant(&g, DMatrix::from_element(1, 1, 1.0));
        let b = CellSeries::constant(&g, DVector::from_element(1, 1.0));
        let q = duhamel_linear(&one, &b, &DVector::zeros(1), Direction::Forward).unwrap();
        assert!((q.final_state()[0] - (std::f64::consts::E - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_examples() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let p = scalar("u1", 0.0, 1.0);
        let u = ControlSignal::constant(&g, &[0.5]);
        let est = estimate_lipschitz(&p, &u, 1.0, &g).unwrap();
        assert!(est.l >= 1.0 && est.c.is_finite());
        assert!(estimate_lipschitz(&p, &u, 0.5, &g).is_err());

        let p = scalar("q1", 1.0, 1.0);
        let traj = solve_forward(&p, &u, &g).unwrap();
        let max_q = traj.component(0).into_iter().fold(0.0, f64::max);
        let est = estimate_lipschitz(&p, &u, 1.0, &g).unwrap();
        assert!(est.l >= max_q + 1.0 - 1e-12);
    }

    #[test]
    fn l1_distance_on_mixed_grids() {
        let a = ControlSignal::constant(&TimeGrid::uniform(1.0, 2).unwrap(), &[0.0]);
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let b = ControlSignal::new(g, vec![vec![1.0], vec![0.0], vec![-2.0]]).unwrap();
        assert!((a.l1_distance(&b) - 1.0).abs() < 1e-15);
    }
}
