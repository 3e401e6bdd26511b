//! Linear Cauchy–Stieltjes problems
//!
//! forward:  `dq = A q dt + Σ B_i dη_i`,   `q(0) = q0`
//! backward: `−dp = Aᵀ p dt + Σ B_i dη_i`, `p(T) = p_T`
//!
//! solved either by Picard iteration of the integral equation or through the
//! Duhamel-type representation with the state-transition matrix of `A`.
//! Both honour the atom convention of [`crate::bv`]: the forward solution is
//! left-continuous with `q(τ⁺) − q(τ) = Σ B_i(τ) a_i`, the backward one has
//! `p(τ⁻) − p(τ⁺) = Σ B_i(τ) a_i`.

use nalgebra::{DMatrix, DVector};

use crate::bv::{BVPath, NBVMeasure};
use crate::error::{Error, Result};
use crate::grid::{first_half, second_half, simpson, CellSeries, TimeGrid};
use crate::ode::{Direction, TransitionTable};

pub const PICARD_TOL: f64 = 1e-12;
pub const PICARD_MAX_ITER: usize = 200;

struct Forcing {
    /// `Σ_i c_i(cell) B_i` at cell start, midpoint and end.
    dens: CellSeries<DVector<f64>>,
    /// `Σ_i a_i(t_k) B_i(t_k)` at every node.
    jump: Vec<DVector<f64>>,
}

fn node_value(b: &CellSeries<DVector<f64>>, k: usize) -> DVector<f64> {
    let n = b.grid.n_cells();
    if k == 0 {
        b.start[0].clone()
    } else if k == n {
        b.end[n - 1].clone()
    } else {
        (&b.end[k - 1] + &b.start[k]) * 0.5
    }
}

fn forcing(grid: &TimeGrid, dim: usize, b: &[CellSeries<DVector<f64>>], eta: &[NBVMeasure]) -> Result<Forcing> {
    if b.len() != eta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficient series for {} measures",
            b.len(),
            eta.len()
        )));
    }
    let cells = grid.n_cells();
    let zero = DVector::zeros(dim);
    let mut dens = CellSeries::constant(grid, zero.clone());
    let mut jump = vec![zero; cells + 1];
    for (bi, ei) in b.iter().zip(eta) {
        if &bi.grid != grid {
            return Err(Error::InvalidInput("B must be sampled on the solve grid".into()));
        }
        if bi.start.iter().chain(&bi.mid).chain(&bi.end).any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!("B vectors must have length {dim}")));
        }
        let ei = if &ei.grid == grid { ei.clone() } else { ei.resample(grid)? };
        for c in 0..cells {
            let d = ei.densities[c];
            if d != 0.0 {
                dens.start[c] += &bi.start[c] * d;
                dens.mid[c] += &bi.mid[c] * d;
                dens.end[c] += &bi.end[c] * d;
            }
        }
        for (k, &a) in ei.atoms.iter().enumerate() {
            if a != 0.0 {
                jump[k] += node_value(bi, k) * a;
            }
        }
    }
    Ok(Forcing { dens, jump })
}

fn assemble(grid: &TimeGrid, left: Vec<DVector<f64>>, right: Vec<DVector<f64>>) -> Result<BVPath> {
    let mut value = left.clone();
    let n = grid.n_cells();
    value[n] = right[n].clone();
    BVPath::new(grid.clone(), left, value, right)
}

fn check_dims(a: &CellSeries<DMatrix<f64>>, boundary: &DVector<f64>) -> Result<usize> {
    let n = boundary.len();
    if a.start.iter().chain(&a.mid).chain(&a.end).any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::DimensionMismatch(format!("A must be {n}×{n}")));
    }
    Ok(n)
}

/// Duhamel-type solution using a precomputed transition table of `A`.
pub fn solve_csp_with_table(
    table: &TransitionTable,
    b: &[CellSeries<DVector<f64>>],
    eta: &[NBVMeasure],
    boundary: &DVector<f64>,
    direction: Direction,
) -> Result<BVPath> {
    let grid = &table.grid;
    let dim = table.dim();
    if boundary.len() != dim {
        return Err(Error::DimensionMismatch(format!("boundary must have length {dim}")));
    }
    let Forcing { dens, jump } = forcing(grid, dim, b, eta)?;
    let cells = grid.n_cells();
    let mut left = vec![boundary.clone(); cells + 1];
    let mut right = left.clone();
    match direction {
        Direction::Forward => {
            let mut acc = boundary.clone();
            for k in 0..cells {
                if k > 0 {
                    acc += table.from_origin_inverse(k) * &jump[k];
                }
                acc += table.forward_cell(k, &dens.start[k], &dens.mid[k], &dens.end[k]);
                left[k + 1] = table.from_origin(k + 1) * &acc;
                right[k + 1] = &left[k + 1] + &jump[k + 1];
            }
        }
        Direction::Backward => {
            left[cells] = boundary + &jump[cells];
            let mut acc = table.from_origin(cells).tr_mul(&left[cells]);
            for k in (0..cells).rev() {
                acc += table.backward_cell(k, &dens.start[k], &dens.mid[k], &dens.end[k]);
                right[k] = table.from_origin_inverse(k).tr_mul(&acc);
                if k > 0 {
                    left[k] = &right[k] + &jump[k];
                    acc += table.from_origin(k).tr_mul(&jump[k]);
                } else {
                    left[0] = right[0].clone();
                }
            }
        }
    }
    assemble(grid, left, right)
}

/// Evaluates the Duhamel-type formulas
/// `q(t) = Z(t,0)[q0 + Σ∫_0^t Z(s,0)⁻¹ B_i dη_i]` and
/// `p(t) = Z(T,t)ᵀ p_T + Σ∫_t^T Z(τ,t)ᵀ B_i dη_i`.
pub fn solve_csp_duhamel(
    a: &CellSeries<DMatrix<f64>>,
    b: &[CellSeries<DVector<f64>>],
    eta: &[NBVMeasure],
    boundary: &DVector<f64>,
    direction: Direction,
) -> Result<BVPath> {
    check_dims(a, boundary)?;
    let table = TransitionTable::new(a)?;
    solve_csp_with_table(&table, b, eta, boundary, direction)
}

/// Picard iteration of the integral equation. Iterates are stored at node
/// left/right limits and cell midpoints; each sweep integrates the previous
/// iterate with Simpson's rule (half-cell rules for the midpoints), so the
/// limit is the Lobatto IIIA collocation solution.
pub fn solve_csp_fixed_point(
    a: &CellSeries<DMatrix<f64>>,
    b: &[CellSeries<DVector<f64>>],
    eta: &[NBVMeasure],
    boundary: &DVector<f64>,
    direction: Direction,
) -> Result<BVPath> {
    let dim = check_dims(a, boundary)?;
    let grid = &a.grid;
    let Forcing { dens, jump } = forcing(grid, dim, b, eta)?;
    let cells = grid.n_cells();

    let mut left = vec![boundary.clone(); cells + 1];
    let mut right = left.clone();
    let mut mid = vec![boundary.clone(); cells];
    let backward = direction == Direction::Backward;
    let coeff = |m: &DMatrix<f64>, x: &DVector<f64>| if backward { m.tr_mul(x) } else { m * x };

    let mut change = f64::INFINITY;
    for _ in 0..PICARD_MAX_ITER {
        let mut nl = left.clone();
        let mut nr = right.clone();
        let mut nm = mid.clone();
        let integrand = |c: usize| {
            (
                coeff(&a.start[c], &right[c]) + &dens.start[c],
                coeff(&a.mid[c], &mid[c]) + &dens.mid[c],
                coeff(&a.end[c], &left[c + 1]) + &dens.end[c],
            )
        };
        if backward {
            nr[cells] = boundary.clone();
            nl[cells] = boundary + &jump[cells];
            for c in (0..cells).rev() {
                let (g0, gm, g1) = integrand(c);
                let h = grid.h(c);
                nm[c] = &nl[c + 1] + second_half(h, g0.clone(), gm.clone(), g1.clone());
                nr[c] = &nl[c + 1] + simpson(h, g0, gm, g1);
                nl[c] = if c > 0 { &nr[c] + &jump[c] } else { nr[c].clone() };
            }
        } else {
            nl[0] = boundary.clone();
            nr[0] = boundary.clone();
            for c in 0..cells {
                let (g0, gm, g1) = integrand(c);
                let h = grid.h(c);
                nm[c] = &nr[c] + first_half(h, g0.clone(), gm.clone(), g1.clone());
                nl[c + 1] = &nr[c] + simpson(h, g0, gm, g1);
                nr[c + 1] = &nl[c + 1] + &jump[c + 1];
            }
        }
        let diff = |x: &[DVector<f64>], y: &[DVector<f64>]| {
            x.iter().zip(y).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max)
        };
        change = diff(&nl, &left).max(diff(&nr, &right)).max(diff(&nm, &mid));
        let scale = nl
            .iter()
            .chain(&nr)
            .map(|v| v.amax())
            .fold(1.0, f64::max);
        left = nl;
        right = nr;
        mid = nm;
        if !change.is_finite() {
            break;
        }
        if change <= PICARD_TOL * scale {
            return assemble(grid, left, right);
        }
    }
    Err(Error::NoConvergence { iterations: PICARD_MAX_ITER, change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::duhamel_linear;

    fn scalar_series(g: &TimeGrid, a: f64) -> CellSeries<DMatrix<f64>> {
        CellSeries::constant(g, DMatrix::from_element(1, 1, a))
    }

    fn ones(g: &TimeGrid) -> CellSeries<DVector<f64>> {
        CellSeries::constant(g, DVector::from_element(1, 1.0))
    }

    fn sup(p: &BVPath, q: &BVPath) -> f64 {
        let d = |x: &[DVector<f64>], y: &[DVector<f64>]| {
            x.iter().zip(y).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
        };
        d(&p.left, &q.left).max(d(&p.right, &q.right)).max(d(&p.value, &q.value))
    }

    #[test]
    fn unit_atom_gives_step() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let eta = NBVMeasure::atom(&g, 5, 1.0).unwrap();
        let zero = DVector::zeros(1);
        for solve in [solve_csp_fixed_point, solve_csp_duhamel] {
            let q = solve(&scalar_series(&g, 0.0), &[ones(&g)], &[eta.clone()], &zero, Direction::Forward).unwrap();
            for k in 0..=10 {
                let expect_left = if k > 5 { 1.0 } else { 0.0 };
                let expect_right = if k >= 5 { 1.0 } else { 0.0 };
                assert_eq!(q.left[k][0], expect_left);
                assert_eq!(q.right[k][0], expect_right);
            }
            assert_eq!(q.eval(0.5)[0], 0.0);
            assert_eq!(q.eval(0.55)[0], 1.0);
        }
    }

    #[test]
    fn lebesgue_measure_forward() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let eta = NBVMeasure::uniform_density(&g, 1.0).unwrap();
        let q = solve_csp_fixed_point(&scalar_series(&g, 0.0), &[ones(&g)], &[eta], &DVector::zeros(1), Direction::Forward)
            .unwrap();
        for k in 0..=10 {
            assert!((q.value[k][0] - g.t(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_exponential_and_cross_check() {
        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let eta = NBVMeasure::uniform_density(&g, 1.0).unwrap();
        let a = scalar_series(&g, 1.0);
        let fp = solve_csp_fixed_point(&a, &[ones(&g)], &[eta.clone()], &DVector::zeros(1), Direction::Backward).unwrap();
        let du = solve_csp_duhamel(&a, &[ones(&g)], &[eta], &DVector::zeros(1), Direction::Backward).unwrap();
        for k in 0..=200 {
            let exact = (1.0 - g.t(k)).exp() - 1.0;
            assert!((fp.value[k][0] - exact).abs() < 1e-6);
        }
        assert!(sup(&fp, &du) < 1e-8);
    }

    #[test]
    fn terminal_atom_backward() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let eta = NBVMeasure::atom(&g, 8, 1.0).unwrap();
        let b = CellSeries::constant(&g, DVector::from_vec(vec![2.0, -1.0]));
        let a = CellSeries::constant(&g, DMatrix::zeros(2, 2));
        let pt = DVector::from_vec(vec![0.5, 0.5]);
        let p = solve_csp_duhamel(&a, &[b], &[eta], &pt, Direction::Backward).unwrap();
        assert_eq!(p.value[8], pt);
        for k in 0..8 {
            assert_eq!(p.value[k], DVector::from_vec(vec![2.5, -0.5]));
        }
    }

    #[test]
    fn zero_measure_matches_duhamel_linear() {
        let g = TimeGrid::uniform(1.5, 400).unwrap();
        let a = CellSeries::from_fn(&g, |t| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0 - t, -0.2]));
        let b = CellSeries::constant(&g, DVector::from_vec(vec![1.0, 0.0]));
        let eta = NBVMeasure::zero(&g);
        let p0 = DVector::from_vec(vec![1.0, -1.0]);
        let zero_b = CellSeries::constant(&g, DVector::zeros(2));
        for dir in [Direction::Forward, Direction::Backward] {
            let lin = duhamel_linear(&a, &zero_b, &p0, dir).unwrap();
            for solve in [solve_csp_fixed_point, solve_csp_duhamel] {
                let p = solve(&a, &[b.clone()], &[eta.clone()], &p0, dir).unwrap();
                for k in 0..=400 {
                    let e = (&p.value[k] - &lin.states[k]).amax();
                    assert!(e < 1e-10, "{dir:?} k={k} e={e:e}");
                }
            }
        }
    }

    #[test]
    fn picard_fails_loudly_on_stiff_growth() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let a = scalar_series(&g, 300.0);
        let r = solve_csp_fixed_point(&a, &[], &[], &DVector::from_element(1, 1.0), Direction::Forward);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }
}
