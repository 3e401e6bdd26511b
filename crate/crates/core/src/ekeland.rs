//! Experimental descent on the Ekeland-penalized functional
//! `J(u) = √(((Ψ(q(T,u)) − ref + ε)⁺)² + d_S(G(q(·,u)))²)` using spike
//! variations towards a pool of candidate controls.

use rayon::prelude::*;

use crate::bv::NBVMeasure;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::ode::{solve_forward, ControlSignal, Trajectory};
use crate::problem::Problem;
use crate::spike::{build_qrho, cell_average_forcing, spike_control};

/// Relative tolerance for treating a constraint sample as attaining the sup.
const TIE_TOL: f64 = 1e-12;

/// Sup-norm distance of sampled constraint values to the nonpositive cone:
/// `max_k max_i (g_k[i])⁺`.
pub fn distance_to_cone(g: &[Vec<f64>]) -> f64 {
    g.iter().flatten().fold(0.0f64, |d, &v| d.max(v))
}

/// Components of the penalized functional at one control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    pub j: f64,
    pub cost: f64,
    pub violation: f64,
}

impl Penalty {
    fn new(cost: f64, violation: f64, reference: f64, eps: f64) -> Penalty {
        let c = (cost - reference + eps).max(0.0);
        Penalty { j: c.hypot(violation), cost, violation }
    }
}

fn constraint_samples(problem: &Problem, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    traj.states
        .iter()
        .enumerate()
        .map(|(k, q)| problem.constraints(q.as_slice(), traj.grid.t(k)))
        .collect()
}

fn evaluate(problem: &Problem, u: &ControlSignal, grid: &TimeGrid, reference: f64, eps: f64) -> Result<Penalty> {
    let grid = grid.union_with(u.grid.nodes());
    let traj = solve_forward(problem, u, &grid)?;
    let cost = problem.cost(traj.final_state().as_slice())?;
    let violation = distance_to_cone(&constraint_samples(problem, &traj)?);
    Ok(Penalty::new(cost, violation, reference, eps))
}

/// `J` at `u`, with the state computed on `grid` refined by the control's
/// nodes. `reference = +∞` means no feasible cost is known yet.
pub fn penalized_cost(problem: &Problem, u: &ControlSignal, reference: f64, eps: f64, grid: &TimeGrid) -> Result<f64> {
    Ok(evaluate(problem, u, grid, reference, eps)?.j)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkelandOptions {
    /// Decreasing penalty offsets `ε_k`, advanced on stagnation.
    pub eps: Vec<f64>,
    /// Increasing control bounds `R_ℓ`; pool members above the current bound
    /// are skipped. Empty means a single stage without restriction.
    pub bounds: Vec<f64>,
    /// Spike fractions tried per candidate; `1` replaces the control outright.
    pub rhos: Vec<f64>,
    /// Extra candidate controls, appended after the Ω corners and center.
    pub pool: Vec<ControlSignal>,
    pub max_iterations: usize,
}

impl Default for EkelandOptions {
    fn default() -> Self {
        EkelandOptions {
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            bounds: Vec::new(),
            rhos: vec![1.0, 0.5, 0.25, 0.1, 0.05],
            pool: Vec::new(),
            max_iterations: 500,
        }
    }
}

/// One accepted iterate (iteration 0 is the start point).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub stage: usize,
    pub eps: f64,
    pub reference: f64,
    pub j: f64,
    pub feasibility: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct Descent {
    pub u: ControlSignal,
    pub history: Vec<HistoryEntry>,
    /// Reference cost and offset in force at the final iterate.
    pub reference: f64,
    pub eps: f64,
    pub iterations: usize,
    pub budget_exhausted: bool,
}

struct Move {
    pool_index: usize,
    rho_index: usize,
    u: ControlSignal,
    penalty: Penalty,
    distance: f64,
}

fn validate(options: &EkelandOptions, u0: &ControlSignal) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    if options.eps.is_empty() || options.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return bad("eps schedule must be nonempty and positive".into());
    }
    if options.eps.windows(2).any(|w| w[1] >= w[0]) {
        return bad("eps schedule must be strictly decreasing".into());
    }
    if options.bounds.windows(2).any(|w| w[1] <= w[0]) {
        return bad("bound schedule must be strictly increasing".into());
    }
    if let Some(&r0) = options.bounds.first() {
        if r0 <= u0.linf_norm() {
            return bad(format!("first bound {r0} must exceed |u0|_inf = {}", u0.linf_norm()));
        }
    }
    if options.rhos.is_empty() || options.rhos.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return bad("rho ladder must be nonempty with values in (0, 1]".into());
    }
    Ok(())
}

/// Removes nodes of `u` that are not nodes of `base` and separate equal
/// values.
fn coalesce(u: ControlSignal, base: &TimeGrid) -> Result<ControlSignal> {
    let mut nodes = vec![u.grid.t(0)];
    let mut values: Vec<Vec<f64>> = vec![u.values[0].clone()];
    for k in 1..u.grid.n_cells() {
        let t = u.grid.t(k);
        if base.node_index(t).is_none() && u.values[k] == *values.last().expect("nonempty") {
            continue;
        }
        nodes.push(t);
        values.push(u.values[k].clone());
    }
    nodes.push(u.grid.t_final());
    ControlSignal::new(TimeGrid::new(nodes)?, values)
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::BlowUp { .. } | Error::Eval { .. } | Error::BoundNotAchieved { .. })
}

/// Spike variation of `u` towards `u_prime` with fraction `rho`.
fn spike_move(problem: &Problem, u: &ControlSignal, u_prime: &ControlSignal, rho: f64, grid: &TimeGrid) -> Result<ControlSignal> {
    let fine = grid.union_with(u.grid.nodes()).union_with(u_prime.grid.nodes());
    if rho >= 1.0 {
        return Ok(u_prime.resample(&fine));
    }
    let h = cell_average_forcing(problem, u, u_prime, &fine)?;
    let q = build_qrho(&h, rho, &fine)?;
    Ok(spike_control(&u.resample(&fine), u_prime, &q))
}

/// Minimises `J` by accepting the best spike move whose decrease beats the
/// Ekeland slack `√ε·‖u_new − u‖_{L¹}`. The reference cost is the best
/// feasible cost seen so far and is updated whenever `J` reaches zero.
/// Stagnation advances `ε`, then the bound stage. `grid` is the base
/// integration grid and is always kept as a subgrid of the control grid.
pub fn ekeland_descend(problem: &Problem, u0: &ControlSignal, grid: &TimeGrid, options: &EkelandOptions) -> Result<Descent> {
    validate(options, u0)?;
    if u0.dim() != problem.m {
        return Err(Error::DimensionMismatch(format!("u0 has dimension {}, m = {}", u0.dim(), problem.m)));
    }
    let tol = 1e-9 * (1.0 + problem.omega.linf_bound());
    if u0.values.iter().any(|v| !problem.omega.contains(v, tol)) {
        return Err(Error::InvalidInput("u0 is not Omega-valued".into()));
    }
    let mut pool: Vec<ControlSignal> = problem
        .omega
        .corners()
        .into_iter()
        .chain(std::iter::once(problem.omega.center()))
        .map(|v| ControlSignal::constant(grid, &v))
        .collect();
    for c in &options.pool {
        if c.dim() != problem.m || c.values.iter().any(|v| !problem.omega.contains(v, tol)) {
            return Err(Error::InvalidInput("pool members must be Omega-valued controls".into()));
        }
        pool.push(c.clone());
    }
    let bounds = if options.bounds.is_empty() { vec![f64::INFINITY] } else { options.bounds.clone() };

    let mut u = coalesce(u0.resample(&grid.union_with(u0.grid.nodes())), grid)?;
    let (mut stage, mut k) = (0, 0);
    let start = evaluate(problem, &u, grid, f64::INFINITY, options.eps[0])?;
    let mut reference = if start.violation == 0.0 { start.cost } else { f64::INFINITY };
    let mut current = Penalty::new(start.cost, start.violation, reference, options.eps[0]);
    let entry = |iter, stage, eps, reference, p: &Penalty| HistoryEntry {
        iter,
        stage,
        eps,
        reference,
        j: p.j,
        feasibility: p.violation,
        cost: p.cost,
    };
    let mut history = vec![entry(0, 0, options.eps[0], reference, &current)];
    let mut iter = 0;
    let mut budget_exhausted = false;

    loop {
        if iter >= options.max_iterations {
            budget_exhausted = true;
            break;
        }
        iter += 1;
        let eps = options.eps[k];
        current = Penalty::new(current.cost, current.violation, reference, eps);
        let pairs: Vec<(usize, usize)> = (0..pool.len())
            .filter(|&i| pool[i].linf_norm() <= bounds[stage])
            .flat_map(|i| (0..options.rhos.len()).map(move |r| (i, r)))
            .collect();
        let moves = pairs
            .par_iter()
            .map(|&(i, r)| -> Result<Option<Move>> {
                let attempt = spike_move(problem, &u, &pool[i], options.rhos[r], grid)
                    .and_then(|v| Ok((evaluate(problem, &v, grid, reference, eps)?, v)));
                match attempt {
                    Ok((penalty, v)) => {
                        let distance = v.l1_distance(&u);
                        Ok(Some(Move { pool_index: i, rho_index: r, u: v, penalty, distance }))
                    }
                    Err(e) if recoverable(&e) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let order = |a: &Move, b: &Move| a.pool_index.cmp(&b.pool_index).then(a.rho_index.cmp(&b.rho_index));
        let (resets, moves): (Vec<Move>, Vec<Move>) =
            moves.into_iter().flatten().partition(|m| m.penalty.j == 0.0 && current.j > 0.0);
        // J = 0 means a feasible point beating the reference by ε: that resets
        // the functional itself, so the slack test of the old one does not apply
        let best = if resets.is_empty() {
            moves
                .into_iter()
                .filter(|m| m.penalty.j < current.j - eps.sqrt() * m.distance)
                .min_by(|a, b| a.penalty.j.total_cmp(&b.penalty.j).then(order(a, b)))
        } else {
            resets.into_iter().min_by(|a, b| a.penalty.cost.total_cmp(&b.penalty.cost).then(order(a, b)))
        };
        match best {
            Some(m) => {
                u = coalesce(m.u, grid)?;
                current = m.penalty;
                history.push(entry(iter, stage, eps, reference, &current));
                if current.j == 0.0 {
                    reference = current.cost;
                    current = Penalty::new(current.cost, current.violation, reference, eps);
                }
            }
            None => {
                k += 1;
                if k == options.eps.len() {
                    k = 0;
                    stage += 1;
                    if stage == bounds.len() {
                        break;
                    }
                }
            }
        }
    }
    let eps = options.eps[k.min(options.eps.len() - 1)];
    Ok(Descent { u, history, reference, eps, iterations: iter, budget_exhausted })
}

/// Multiplier estimates at `u` for the functional with `reference` and
/// `eps`: `ψ = (Ψ − ref + ε)⁺ / J` and, for each constraint, atoms at the
/// nodes attaining the sup-norm distance carrying `d_S / J` split equally
/// over all attaining (constraint, node) pairs; then rescaled so that
/// `ψ² + Σ V(η_i)² = 1`. `grid` must refine the control grid.
pub fn extract_multipliers(
    problem: &Problem,
    u: &ControlSignal,
    reference: f64,
    eps: f64,
    grid: &TimeGrid,
) -> Result<(f64, Vec<NBVMeasure>)> {
    let traj = solve_forward(problem, u, grid)?;
    let g = constraint_samples(problem, &traj)?;
    let cost = problem.cost(traj.final_state().as_slice())?;
    let d = distance_to_cone(&g);
    let p = Penalty::new(cost, d, reference, eps);
    if p.j == 0.0 {
        return Err(Error::DegenerateState);
    }
    let mut psi = (cost - reference + eps).max(0.0) / p.j;
    let mut atoms = vec![vec![0.0; grid.nodes().len()]; problem.j()];
    if d > 0.0 {
        let hits: Vec<(usize, usize)> = g
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(i, &v)| (i, k, v)))
            .filter(|&(_, _, v)| v >= d * (1.0 - TIE_TOL))
            .map(|(i, k, _)| (i, k))
            .collect();
        let w = d / p.j / hits.len() as f64;
        for (i, k) in hits {
            atoms[i][k] += w;
        }
    }
    // atoms at t = 0 are not representable in a normalized measure
    for a in &mut atoms {
        a[0] = 0.0;
    }
    let totals: Vec<f64> = atoms.iter().map(|a| a.iter().sum()).collect();
    let norm = (psi * psi + totals.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateState);
    }
    psi /= norm;
    let eta = atoms
        .into_iter()
        .map(|a| {
            let scaled = a.into_iter().map(|v| v / norm).collect();
            NBVMeasure::new(grid.clone(), scaled, vec![0.0; grid.n_cells()])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((psi, eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Omega;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integrator(g: &[&str]) -> Problem {
        Problem::new(1, 1, &["u1"], "q1", g, Omega::Box { lo: vec![-1.0], hi: vec![1.0] }, vec![0.0], 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_to_cone(&[vec![-1.0, 0.0], vec![-0.2, -3.0]]), 0.0);
        assert_eq!(distance_to_cone(&[vec![-1.0], vec![0.3]]), 0.3);
        let g: Vec<Vec<f64>> = (0..=100).map(|k| vec![k as f64 / 100.0 - 0.5]).collect();
        assert_eq!(distance_to_cone(&g), 0.5);
    }

    #[test]
    fn distance_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let b: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let sup = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!((distance_to_cone(&a) - distance_to_cone(&b)).abs() <= sup + 1e-15);
        }
    }

    #[test]
    fn penalty_examples() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let prob = integrator(&[]);
        let u = ControlSignal::constant(&g, &[0.5]);
        assert_eq!(penalized_cost(&prob, &u, 0.5, 0.01, &g).unwrap(), 0.01);
        assert_eq!(penalized_cost(&prob, &u, 0.51, 0.01, &g).unwrap(), 0.0);
        assert!((Penalty::new(0.4, 0.3, 0.1, 0.1).j - 0.5).abs() < 1e-15);
    }

    #[test]
    fn already_optimal_accepts_nothing() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let prob = integrator(&[]);
        let u0 = ControlSignal::constant(&g, &[-1.0]);
        let d = ekeland_descend(&prob, &u0, &g, &EkelandOptions::default()).unwrap();
        assert_eq!(d.history.len(), 1);
        assert_eq!(d.u.values, u0.values);
        assert!(!d.budget_exhausted);
    }

    #[test]
    fn integrator_descends_to_lower_bound() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let prob = integrator(&[]);
        let u0 = ControlSignal::constant(&g, &[1.0]);
        let d = ekeland_descend(&prob, &u0, &g, &EkelandOptions::default()).unwrap();
        let last = d.history.last().unwrap();
        assert!((last.cost + 1.0).abs() <= 0.02, "{last:?}");
        assert!(d.iterations <= 500);
        let (psi, eta) = extract_multipliers(&prob, &d.u, d.reference, d.eps, &g.union_with(d.u.grid.nodes())).unwrap();
        assert_eq!(psi, 1.0);
        assert!(eta.is_empty());
    }

    #[test]
    fn multipliers_single_peak() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        // q = t, so G = t − 0.5 peaks only at t = 1
        let prob = integrator(&["q1 - 0.5"]);
        let u = ControlSignal::constant(&g, &[1.0]);
        let (psi, eta) = extract_multipliers(&prob, &u, 1.0, 0.1, &g).unwrap();
        let nonzero: Vec<usize> = (0..=10).filter(|&k| eta[0].atoms[k] > 0.0).collect();
        assert_eq!(nonzero, vec![10]);
        assert!((psi * psi + eta[0].total().powi(2) - 1.0).abs() < 1e-12);

        let feasible = ControlSignal::constant(&g, &[0.0]);
        let (psi, eta) = extract_multipliers(&prob, &feasible, 0.0, 0.1, &g).unwrap();
        assert_eq!(psi, 1.0);
        assert!(eta[0].is_zero());
        assert!(matches!(extract_multipliers(&prob, &feasible, 1.0, 0.1, &g), Err(Error::DegenerateState)));
    }
}
