//! Numerical verification of the first-order necessary conditions for a
//! candidate `(u*, ψ, η)`: feasibility, adjoint/transversality, pointwise
//! Hamiltonian minimisation, complementary slackness and nontriviality.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bv::{stieltjes_simpson, BVPath, NBVMeasure};
use crate::csp::solve_csp_with_table;
use crate::error::{Error, Result};
use crate::grid::{CellSeries, TimeGrid};
use crate::ode::{linearize, solve_forward, state_cells, ControlSignal, Direction, TransitionTable, Trajectory};
use crate::problem::{Omega, Problem, ToleranceOverrides};

/// Grid points per axis for box minimisation.
pub const BOX_POINTS: usize = 33;
/// Golden-section iterations per axis after the grid search.
pub const GOLDEN_ITERS: usize = 20;
const RADIAL_POINTS: usize = 17;
const ANGULAR_POINTS: usize = 64;
/// Largest tensor grid searched exhaustively; above it coordinate sweeps are used.
const MAX_TENSOR: usize = 40_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub hamiltonian: f64,
    pub slackness: f64,
    pub transversality: f64,
    pub nontriviality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-6,
            hamiltonian: 1e-3,
            slackness: 1e-4,
            transversality: 1e-8,
            nontriviality: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn with_overrides(mut self, o: &ToleranceOverrides) -> Tolerances {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut self.feasibility, o.feasibility);
        set(&mut self.hamiltonian, o.hamiltonian);
        set(&mut self.slackness, o.slackness);
        set(&mut self.transversality, o.transversality);
        set(&mut self.nontriviality, o.nontriviality);
        self
    }
}

/// A candidate optimal control with its multipliers; the state is always
/// recomputed from `u`.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub u: ControlSignal,
    pub psi: f64,
    pub eta: Vec<NBVMeasure>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    Error(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::Error(cause) => write!(f, "ERROR({cause})"),
        }
    }
}

/// Hamiltonian data at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeHamiltonian {
    pub t: f64,
    /// `H(q*, u*, p, t) − min_Ω H`, clipped at 0.
    pub residual: f64,
    pub h_candidate: f64,
    pub h_min: f64,
    pub argmin: Vec<f64>,
    /// Node carries a jump of `p` and is left out of the sup.
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianReport {
    pub sup: f64,
    pub l1: f64,
    pub nodes: Vec<NodeHamiltonian>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slackness {
    /// `|∫ G_i dη_i|`.
    pub residual: f64,
    /// `∫ G_i⁺ dη_i`.
    pub positive: f64,
    /// `∫ G_i⁻ dη_i` (with `G⁻ = max(−G, 0)`).
    pub negative: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    /// True when `value` must be at least `tolerance` rather than at most.
    pub lower_bound: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub psi: f64,
    pub feasibility: f64,
    pub transversality: f64,
    pub hamiltonian: Option<HamiltonianReport>,
    pub slackness: Vec<Slackness>,
    pub nontriviality: f64,
    pub monotone: Vec<bool>,
    pub conditions: Vec<Condition>,
    pub verdict: Verdict,
}

impl Certificate {
    /// A certificate carrying only an `ERROR` verdict.
    pub fn errored(psi: f64, cause: String) -> Certificate {
        Certificate {
            psi,
            feasibility: f64::NAN,
            transversality: f64::NAN,
            hamiltonian: None,
            slackness: Vec::new(),
            nontriviality: f64::NAN,
            monotone: Vec::new(),
            conditions: Vec::new(),
            verdict: Verdict::Error(cause),
        }
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Everything derived from a candidate on its working grid.
#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub grid: TimeGrid,
    pub u: ControlSignal,
    pub eta: Vec<NBVMeasure>,
    pub state: Trajectory,
    pub states: CellSeries<DVector<f64>>,
    pub p: BVPath,
}

fn working_grid(candidate: &Candidate) -> Result<TimeGrid> {
    let mut grid = candidate.u.grid.clone();
    for e in &candidate.eta {
        if (e.grid.t_final() - grid.t_final()).abs() > 1e-12 * grid.t_final() {
            return Err(Error::InvalidInput(format!(
                "multiplier horizon {} differs from control horizon {}",
                e.grid.t_final(),
                grid.t_final()
            )));
        }
        grid = grid.union_with(e.grid.nodes());
    }
    Ok(grid)
}

/// Solves `−dp = ∂₁f(q*,u*,t)ᵀ p dt + Σ ∂₁G_i(q*,t) dη_i`,
/// `p(T) = ψ ∇Ψ(q*(T))`, on the union of the control and multiplier grids.
pub fn solve_adjoint(problem: &Problem, candidate: &Candidate) -> Result<AdjointSolution> {
    if !(candidate.psi >= 0.0 && candidate.psi.is_finite()) {
        return Err(Error::InvalidInput(format!("psi must be >= 0, got {}", candidate.psi)));
    }
    if candidate.eta.len() != problem.j() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} constraints",
            candidate.eta.len(),
            problem.j()
        )));
    }
    if (candidate.u.grid.t_final() - problem.t_final).abs() > 1e-12 * problem.t_final {
        return Err(Error::InvalidInput(format!(
            "control horizon {} differs from T = {}",
            candidate.u.grid.t_final(),
            problem.t_final
        )));
    }
    let grid = working_grid(candidate)?;
    let u = candidate.u.resample(&grid);
    let eta = candidate
        .eta
        .iter()
        .map(|e| e.resample(&grid))
        .collect::<Result<Vec<_>>>()?;
    let state = solve_forward(problem, &u, &grid)?;
    let states = state_cells(problem, &state, &u)?;
    let a = linearize(problem, &states, &u)?;
    let b = (0..problem.j())
        .map(|i| {
            let g = &states.grid;
            let n = g.n_cells();
            let mut start = Vec::with_capacity(n);
            let mut mid = Vec::with_capacity(n);
            let mut end = Vec::with_capacity(n);
            for k in 0..n {
                start.push(problem.constraint_gradient(i, states.start[k].as_slice(), g.t(k))?);
                mid.push(problem.constraint_gradient(i, states.mid[k].as_slice(), g.mid(k))?);
                end.push(problem.constraint_gradient(i, states.end[k].as_slice(), g.t(k + 1))?);
            }
            CellSeries::new(g.clone(), start, mid, end)
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary = problem.cost_gradient(state.final_state().as_slice())? * candidate.psi;
    let table = TransitionTable::new(&a)?;
    let p = solve_csp_with_table(&table, &b, &eta, &boundary, Direction::Backward)?;
    Ok(AdjointSolution { grid, u, eta, state, states, p })
}

/// The adjoint path of the candidate.
pub fn assemble_adjoint(problem: &Problem, candidate: &Candidate) -> Result<BVPath> {
    Ok(solve_adjoint(problem, candidate)?.p)
}

fn hamiltonian(problem: &Problem, q: &[f64], v: &[f64], p: &DVector<f64>, t: f64) -> Result<f64> {
    Ok(p.dot(&problem.dynamics(q, v, t)?))
}

fn golden(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

fn axis_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi == lo {
        return vec![lo];
    }
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
        .collect()
}

/// `min_{v ∈ Ω} g(v)` by the strategy of the control set type. Ties keep
/// the first point in enumeration order, so results are deterministic.
pub fn minimize_over_omega(omega: &Omega, mut g: impl FnMut(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
    match omega {
        Omega::Finite { points } => {
            let mut best = (points[0].clone(), g(&points[0])?);
            for p in &points[1..] {
                let v = g(p)?;
                if v < best.1 {
                    best = (p.clone(), v);
                }
            }
            Ok(best)
        }
        Omega::Box { lo, hi } => minimize_box(lo, hi, g),
        Omega::Ball { center, radius } => match center.len() {
            1 => minimize_box(&[center[0] - radius], &[center[0] + radius], g),
            2 => minimize_disc(center, *radius, g),
            m => Err(Error::UnsupportedOmega(format!(
                "ball control sets are supported for m <= 2, got m = {m}"
            ))),
        },
    }
}

fn minimize_box(lo: &[f64], hi: &[f64], mut g: impl FnMut(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
    let m = lo.len();
    let axes: Vec<Vec<f64>> = (0..m).map(|i| axis_points(lo[i], hi[i], BOX_POINTS)).collect();
    let mut best_v: Vec<f64> = (0..m).map(|i| 0.5 * (lo[i] + hi[i])).collect();
    let mut best = g(&best_v)?;
    let total = axes.iter().map(|a| a.len()).try_fold(1usize, |acc, l| acc.checked_mul(l));
    match total {
        Some(total) if total <= MAX_TENSOR => {
            let mut idx = vec![0usize; m];
            let mut v: Vec<f64> = (0..m).map(|i| axes[i][0]).collect();
            for _ in 0..total {
                let val = g(&v)?;
                if val < best {
                    best = val;
                    best_v.clone_from(&v);
                }
                for i in 0..m {
                    idx[i] += 1;
                    if idx[i] < axes[i].len() {
                        v[i] = axes[i][idx[i]];
                        break;
                    }
                    idx[i] = 0;
                    v[i] = axes[i][0];
                }
            }
        }
        _ => {
            // cyclic coordinate sweeps over the per-axis grids
            for _ in 0..4 {
                for i in 0..m {
                    let mut v = best_v.clone();
                    for &x in &axes[i] {
                        v[i] = x;
                        let val = g(&v)?;
                        if val < best {
                            best = val;
                            best_v[i] = x;
                        }
                    }
                }
            }
        }
    }
    for i in 0..m {
        let step = if axes[i].len() > 1 { axes[i][1] - axes[i][0] } else { 0.0 };
        if step == 0.0 {
            continue;
        }
        let a = (best_v[i] - step).max(lo[i]);
        let b = (best_v[i] + step).min(hi[i]);
        let mut v = best_v.clone();
        let (x, val) = golden(a, b, |x| {
            v[i] = x;
            g(&v)
        })?;
        if val < best {
            best = val;
            best_v[i] = x;
        }
    }
    Ok((best_v, best))
}

fn minimize_disc(center: &[f64], radius: f64, mut g: impl FnMut(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
    let point = |r: f64, a: f64| vec![center[0] + r * a.cos(), center[1] + r * a.sin()];
    let mut best_ra = (0.0, 0.0);
    let mut best = g(center)?;
    for i in 1..RADIAL_POINTS {
        let r = radius * i as f64 / (RADIAL_POINTS - 1) as f64;
        for j in 0..ANGULAR_POINTS {
            let a = std::f64::consts::TAU * j as f64 / ANGULAR_POINTS as f64;
            let val = g(&point(r, a))?;
            if val < best {
                best = val;
                best_ra = (r, a);
            }
        }
    }
    let da = std::f64::consts::TAU / ANGULAR_POINTS as f64;
    let dr = radius / (RADIAL_POINTS - 1) as f64;
    if best_ra.0 > 0.0 {
        let (a, val) = golden(best_ra.1 - da, best_ra.1 + da, |a| g(&point(best_ra.0, a)))?;
        if val < best {
            best = val;
            best_ra.1 = a;
        }
    }
    let (r, val) = golden((best_ra.0 - dr).max(0.0), (best_ra.0 + dr).min(radius), |r| g(&point(r, best_ra.1)))?;
    if val < best {
        best = val;
        best_ra.0 = r;
    }
    Ok((point(best_ra.0, best_ra.1), best))
}

/// Node-wise `H(q*, u*, p, t) − min_Ω H(q*, ·, p, t)`.
///
/// `p` is read through its node values (left limits at interior atoms).
/// Nodes where `p` jumps are excluded from the sup; the L¹ norm integrates
/// one-sided residuals with the trapezoid rule.
pub fn hamiltonian_residual(problem: &Problem, state: &Trajectory, u: &ControlSignal, p: &BVPath) -> Result<HamiltonianReport> {
    let grid = &state.grid;
    if &p.grid != grid || !grid.refines(&u.grid) {
        return Err(Error::InvalidInput("state, control and adjoint grids do not match".into()));
    }
    let n = grid.n_cells();
    let jump_tol = |k: usize| 1e-14 * (1.0 + p.left[k].amax());
    let jumps: Vec<bool> = (0..=n)
        .map(|k| {
            let other = if k == n { &p.value[n] } else { &p.right[k] };
            (other - &p.left[k]).amax() > jump_tol(k)
        })
        .collect();

    struct Side {
        residual: f64,
        h_candidate: f64,
        h_min: f64,
        argmin: Vec<f64>,
    }
    let side = |k: usize, pk: &DVector<f64>, v: &[f64]| -> Result<Side> {
        let t = grid.t(k);
        let q = state.states[k].as_slice();
        let h_candidate = hamiltonian(problem, q, v, pk, t)?;
        let (argmin, h_min) = minimize_over_omega(&problem.omega, |w| hamiltonian(problem, q, w, pk, t))?;
        Ok(Side { residual: (h_candidate - h_min).max(0.0), h_candidate, h_min, argmin })
    };

    // (node side, left side, right side) per node
    let per_node = (0..=n)
        .into_par_iter()
        .map(|k| -> Result<(Side, f64, f64)> {
            let t = grid.t(k);
            let v_right = u.value_at(t);
            let node = side(k, &p.value[k], v_right)?;
            if !jumps[k] {
                let left = if k > 0 {
                    let v_left = u.value_at(grid.mid(k - 1));
                    let q = state.states[k].as_slice();
                    (hamiltonian(problem, q, v_left, &p.value[k], t)? - node.h_min).max(0.0)
                } else {
                    node.residual
                };
                let r = node.residual;
                return Ok((node, left, r));
            }
            let left = if k > 0 {
                side(k, &p.left[k], u.value_at(grid.mid(k - 1)))?.residual
            } else {
                0.0
            };
            let right = if k < n { side(k, &p.right[k], v_right)?.residual } else { 0.0 };
            Ok((node, left, right))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sup = 0.0f64;
    let mut l1 = 0.0;
    let mut nodes = Vec::with_capacity(n + 1);
    for (k, (node, _, right)) in per_node.iter().enumerate() {
        if !jumps[k] {
            sup = sup.max(node.residual);
        }
        if k < n {
            l1 += 0.5 * grid.h(k) * (right + per_node[k + 1].1);
        }
        nodes.push(NodeHamiltonian {
            t: grid.t(k),
            residual: node.residual,
            h_candidate: node.h_candidate,
            h_min: node.h_min,
            argmin: node.argmin.clone(),
            excluded: jumps[k],
        });
    }
    Ok(HamiltonianReport { sup, l1, nodes })
}

/// `|∫ G_i(q*(t), t) dη_i(t)|` per constraint, with the positive and
/// negative parts of the integrand integrated separately.
pub fn slackness_residual(problem: &Problem, states: &CellSeries<DVector<f64>>, eta: &[NBVMeasure]) -> Result<Vec<Slackness>> {
    let g = &states.grid;
    let n = g.n_cells();
    let mut node_vals = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let q = if k < n { &states.start[k] } else { &states.end[n - 1] };
        node_vals.push(problem.constraints(q.as_slice(), g.t(k))?);
    }
    let mut mid_vals = Vec::with_capacity(n);
    for k in 0..n {
        mid_vals.push(problem.constraints(states.mid[k].as_slice(), g.mid(k))?);
    }
    eta.iter()
        .enumerate()
        .map(|(i, e)| {
            let e = if &e.grid == g { e.clone() } else { e.resample(g)? };
            let zn: Vec<f64> = node_vals.iter().map(|v| v[i]).collect();
            let zm: Vec<f64> = mid_vals.iter().map(|v| v[i]).collect();
            let pos = |z: &[f64]| z.iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
            let neg = |z: &[f64]| z.iter().map(|v| (-v).max(0.0)).collect::<Vec<_>>();
            let total = stieltjes_simpson(&zn, &zm, &e);
            Ok(Slackness {
                residual: total.abs(),
                positive: stieltjes_simpson(&pos(&zn), &pos(&zm), &e),
                negative: stieltjes_simpson(&neg(&zn), &neg(&zm), &e),
            })
        })
        .collect()
}

/// `max_i max_k G_i(q*(t_k), t_k)⁺`.
pub fn feasibility_residual(problem: &Problem, state: &Trajectory) -> Result<f64> {
    let mut worst = 0.0f64;
    for (k, q) in state.states.iter().enumerate() {
        for v in problem.constraints(q.as_slice(), state.grid.t(k))? {
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Runs every check; solver failures produce an `ERROR` verdict rather than
/// an `Err`.
pub fn check_certificate(problem: &Problem, candidate: &Candidate, tol: &Tolerances) -> Certificate {
    match try_check_certificate(problem, candidate, tol) {
        Ok(c) => c,
        Err(e) => Certificate::errored(candidate.psi, e.to_string()),
    }
}

/// Like [`check_certificate`] but returns failures to produce a certificate
/// as errors.
pub fn try_check_certificate(problem: &Problem, candidate: &Candidate, tol: &Tolerances) -> Result<Certificate> {
    let sol = solve_adjoint(problem, candidate)?;
    let n = sol.grid.n_cells();
    let feasibility = feasibility_residual(problem, &sol.state)?;
    let target = problem.cost_gradient(sol.state.final_state().as_slice())? * candidate.psi;
    let transversality = (&sol.p.value[n] - target).norm();
    let ham = hamiltonian_residual(problem, &sol.state, &sol.u, &sol.p)?;
    let slackness = slackness_residual(problem, &sol.states, &sol.eta)?;
    let nontriviality = candidate.psi.powi(2) + sol.eta.iter().map(|e| e.total().powi(2)).sum::<f64>();
    let monotone: Vec<bool> = sol
        .eta
        .iter()
        .map(|e| e.atoms.iter().chain(&e.densities).all(|w| *w >= 0.0))
        .collect();

    let upper = |name, value: f64, tolerance| Condition {
        name,
        value,
        tolerance,
        lower_bound: false,
        verdict: if value <= tolerance { Verdict::Pass } else { Verdict::Fail },
    };
    let slack_max = slackness.iter().map(|s| s.residual).fold(0.0, f64::max);
    let mut conditions = vec![
        upper("feasibility", feasibility, tol.feasibility),
        upper("transversality", transversality, tol.transversality),
        upper("hamiltonian", ham.sup, tol.hamiltonian),
        upper("slackness", slack_max, tol.slackness),
        Condition {
            name: "nontriviality",
            value: nontriviality,
            tolerance: tol.nontriviality,
            lower_bound: true,
            verdict: if nontriviality >= tol.nontriviality { Verdict::Pass } else { Verdict::Fail },
        },
    ];
    let all_monotone = monotone.iter().all(|m| *m);
    conditions.push(Condition {
        name: "monotonicity",
        value: if all_monotone { 1.0 } else { 0.0 },
        tolerance: 1.0,
        lower_bound: true,
        verdict: if all_monotone { Verdict::Pass } else { Verdict::Fail },
    });
    let verdict = if conditions.iter().all(|c| c.verdict.is_pass()) { Verdict::Pass } else { Verdict::Fail };
    Ok(Certificate {
        psi: candidate.psi,
        feasibility,
        transversality,
        hamiltonian: Some(ham),
        slackness,
        nontriviality,
        monotone,
        conditions,
        verdict,
    })
}
