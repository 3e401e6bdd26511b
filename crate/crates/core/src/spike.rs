//! Spike sets `Q_ρ`, implicit spike variations and the variation vector.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CellSeries, TimeGrid};
use crate::ode::{duhamel_linear, linearize, solve_forward, state_cells, ControlSignal, Direction, Trajectory};
use crate::problem::Problem;

/// Refinement retries after the first attempt in [`build_qrho`].
pub const MAX_RETRIES: usize = 4;
/// Dense samples per base cell when verifying the running-integral bound.
pub const DENSE_FACTOR: usize = 10;

/// A finite union of disjoint half-open intervals `[a, b)` in `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeSet {
    pub rho: f64,
    pub t_final: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    values.into_iter().for_each(|v| acc.add(v));
    acc.value()
}

impl SpikeSet {
    /// `Q_0 = ∅`.
    pub fn empty(t_final: f64) -> SpikeSet {
        SpikeSet { rho: 0.0, t_final, intervals: Vec::new() }
    }

    /// Lebesgue measure, summed with compensation.
    pub fn measure(&self) -> f64 {
        compensated_sum(self.intervals.iter().map(|(a, b)| b - a))
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|&(a, _)| a <= t);
        i > 0 && t < self.intervals[i - 1].1
    }

    pub fn endpoints(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
}

/// `sup_t ‖∫_0^t (1 − 1_Q(s)/ρ) h(s) ds‖` for `h` constant on each cell of
/// `grid`, evaluated exactly at every breakpoint and at `DENSE_FACTOR`
/// points per cell.
pub fn running_integral_sup(h: &[DVector<f64>], grid: &TimeGrid, q: &SpikeSet) -> f64 {
    if q.rho <= 0.0 {
        return 0.0;
    }
    let mut pts: Vec<f64> = grid.nodes().to_vec();
    pts.extend(q.endpoints());
    for c in 0..grid.n_cells() {
        for j in 1..DENSE_FACTOR {
            pts.push(grid.t(c) + grid.h(c) * j as f64 / DENSE_FACTOR as f64);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut acc = DVector::zeros(h[0].len());
    let mut best = 0.0f64;
    for w in pts.windows(2) {
        let (p, r) = (w[0], w[1]);
        let m = 0.5 * (p + r);
        let weight = if q.contains(m) { 1.0 - 1.0 / q.rho } else { 1.0 };
        acc += &h[grid.cell_of(m)] * (weight * (r - p));
        best = best.max(acc.norm());
    }
    best
}

/// Constructs `Q_ρ` with `λ(Q_ρ) = ρT` and
/// `sup_t ‖∫_0^t (1 − 1_{Q_ρ}/ρ) h‖ ≤ ρ` for `h` constant on each cell.
///
/// Every cell is split into equal subcells carrying at most
/// `ρ²/(2(ρ+1))` of `∫‖h‖`, and the leading `ρ`-fraction of each subcell is
/// selected. Interval lengths are corrected against a compensated running
/// total so that the measure is `ρT` to rounding. If the bound check fails
/// the threshold is halved, up to [`MAX_RETRIES`] times.
pub fn build_qrho(h: &[DVector<f64>], rho: f64, grid: &TimeGrid) -> Result<SpikeSet> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, 1), got {rho}")));
    }
    if h.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "h has {} cell values for {} cells",
            h.len(),
            grid.n_cells()
        )));
    }
    if h.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidInput("h must be finite".into()));
    }
    let mut threshold = rho * rho / (2.0 * (rho + 1.0));
    let mut sup = f64::INFINITY;
    for _ in 0..=MAX_RETRIES {
        let set = select(h, rho, grid, threshold);
        sup = running_integral_sup(h, grid, &set);
        if sup <= rho {
            return Ok(set);
        }
        threshold *= 0.5;
    }
    Err(Error::BoundNotAchieved { rho, sup })
}

fn select(h: &[DVector<f64>], rho: f64, grid: &TimeGrid, threshold: f64) -> SpikeSet {
    let mut intervals = Vec::new();
    let mut realized = Compensated::default();
    for c in 0..grid.n_cells() {
        let (t0, len) = (grid.t(c), grid.h(c));
        let mass = h[c].norm() * len;
        let pieces = ((mass / threshold).ceil() as usize).max(1);
        for i in 0..pieces {
            let a = if i == 0 { t0 } else { t0 + len * i as f64 / pieces as f64 };
            let b = if i + 1 == pieces { grid.t(c + 1) } else { t0 + len * (i + 1) as f64 / pieces as f64 };
            // length that brings the selected total up to ρ·b
            let want = rho * b - realized.value();
            let end = (a + want.clamp(0.0, b - a)).min(b);
            if end > a {
                realized.add(end - a);
                intervals.push((a, end));
            }
        }
    }
    SpikeSet { rho, t_final: grid.t_final(), intervals }
}

/// `u'` on `Q`, `u` elsewhere, on the union of both control grids and the
/// endpoints of `Q`.
pub fn spike_control(u: &ControlSignal, u_prime: &ControlSignal, q: &SpikeSet) -> ControlSignal {
    let grid = u
        .grid
        .union_with(u_prime.grid.nodes())
        .union_with(&q.endpoints());
    let values = (0..grid.n_cells())
        .map(|k| {
            let t = grid.mid(k);
            if q.contains(t) { u_prime.value_at(t) } else { u.value_at(t) }.to_vec()
        })
        .collect();
    ControlSignal { grid, values }
}

/// `h_{u,u'}(τ) = f(q(τ,u), u'(τ), τ) − f(q(τ,u), u(τ), τ)` at cell starts,
/// midpoints and ends.
fn forcing(problem: &Problem, states: &CellSeries<DVector<f64>>, u: &ControlSignal, u_prime: &ControlSignal) -> Result<CellSeries<DVector<f64>>> {
    let g = &states.grid;
    let n = g.n_cells();
    let diff = |x: &DVector<f64>, k: usize, t: f64| -> Result<DVector<f64>> {
        let m = g.mid(k);
        Ok(problem.dynamics(x.as_slice(), u_prime.value_at(m), t)?
            - problem.dynamics(x.as_slice(), u.value_at(m), t)?)
    };
    let mut start = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    let mut end = Vec::with_capacity(n);
    for k in 0..n {
        start.push(diff(&states.start[k], k, g.t(k))?);
        mid.push(diff(&states.mid[k], k, g.mid(k))?);
        end.push(diff(&states.end[k], k, g.t(k + 1))?);
    }
    CellSeries::new(g.clone(), start, mid, end)
}

/// Simpson cell averages of `h_{u,u'}` along `q(·,u)` on `grid`, which must
/// refine the grids of `u` and `u'`.
pub(crate) fn cell_average_forcing(
    problem: &Problem,
    u: &ControlSignal,
    u_prime: &ControlSignal,
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    let traj = solve_forward(problem, u, grid)?;
    let states = state_cells(problem, &traj, u)?;
    let hs = forcing(problem, &states, u, u_prime)?;
    Ok((0..grid.n_cells())
        .map(|k| (&hs.start[k] + &hs.mid[k] * 4.0 + &hs.end[k]) / 6.0)
        .collect())
}

/// Solves `ẇ = ∂₁f(q(·,u),u,·) w + h_{u,u'}`, `w(0) = 0`.
pub fn variation_vector(problem: &Problem, u: &ControlSignal, u_prime: &ControlSignal, grid: &TimeGrid) -> Result<Trajectory> {
    if !grid.refines(&u_prime.grid) {
        return Err(Error::InvalidInput(
            "the solve grid must contain every node of u'".into(),
        ));
    }
    let traj = solve_forward(problem, u, grid)?;
    let states = state_cells(problem, &traj, u)?;
    let a = linearize(problem, &states, u)?;
    let b = forcing(problem, &states, u, u_prime)?;
    duhamel_linear(&a, &b, &DVector::zeros(problem.n), Direction::Forward)
}

/// For each `ρ`, `‖(q(·,u_ρ) − q(·,u))/ρ − w‖_∞` with `u_ρ` the spike
/// variation built from `h_{u,u'}` (cell averages on `grid`). All three
/// trajectories are computed on `grid` refined by the endpoints of `Q_ρ`.
pub fn differentiability_probe(
    problem: &Problem,
    u: &ControlSignal,
    u_prime: &ControlSignal,
    rhos: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<(f64, f64)>> {
    if !grid.refines(&u_prime.grid) {
        return Err(Error::InvalidInput(
            "the probe grid must contain every node of u'".into(),
        ));
    }
    let h = cell_average_forcing(problem, u, u_prime, grid)?;
    rhos.par_iter()
        .map(|&rho| {
            let q = build_qrho(&h, rho, grid)?;
            let fine = grid.union_with(&q.endpoints());
            let spiked = spike_control(u, u_prime, &q);
            let q_rho = solve_forward(problem, &spiked, &fine)?;
            let q_ref = solve_forward(problem, u, &fine)?;
            let w = variation_vector(problem, u, u_prime, &fine)?;
            let err = q_rho
                .states
                .iter()
                .zip(&q_ref.states)
                .zip(&w.states)
                .map(|((a, b), w)| ((a - b) / rho - w).amax())
                .fold(0.0, f64::max);
            Ok((rho, err))
        })
        .collect()
}
