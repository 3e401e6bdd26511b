//! Bounded-variation paths, monotone normalized multipliers and
//! Riemann–Stieltjes quadrature.
//!
//! Atom convention: `dη([a, b)) = η(b) − η(a)` with `η` left-continuous, so
//! `∫_a^b z dη` charges atoms at `t_k` with `a ≤ t_k < b`, and additionally
//! the atom at `T` when `b = T`. Integrals are therefore additive over
//! adjacent intervals and `∫_s^T` sees the terminal atom for every `s < T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{simpson, TimeGrid};

/// A vector-valued BV function sampled at grid nodes. Each node carries its
/// left limit, its value and its right limit; between nodes the path is
/// linear from `right[k]` to `left[k + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BVPath {
    pub grid: TimeGrid,
    pub left: Vec<DVector<f64>>,
    pub value: Vec<DVector<f64>>,
    pub right: Vec<DVector<f64>>,
}

impl BVPath {
    pub fn new(
        grid: TimeGrid,
        left: Vec<DVector<f64>>,
        value: Vec<DVector<f64>>,
        right: Vec<DVector<f64>>,
    ) -> Result<BVPath> {
        let len = grid.nodes().len();
        if left.len() != len || value.len() != len || right.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "path has {}/{}/{} samples for {len} nodes",
                left.len(),
                value.len(),
                right.len()
            )));
        }
        let d = value[0].len();
        if left.iter().chain(&value).chain(&right).any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch("path samples differ in dimension".into()));
        }
        if left[0] != right[0] || left[0] != value[0] {
            return Err(Error::InvalidInput(
                "left, value and right must agree at t = 0".into(),
            ));
        }
        Ok(BVPath { grid, left, value, right })
    }

    /// A path that is continuous at every node.
    pub fn continuous(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<BVPath> {
        BVPath::new(grid, values.clone(), values.clone(), values)
    }

    /// Scalar path built from node values and jumps: `left` is given and
    /// `right = left + jump`; interior values follow the left limit and the
    /// value at `T` is the right limit.
    pub fn scalar(grid: TimeGrid, left: &[f64], right: &[f64]) -> Result<BVPath> {
        let l: Vec<_> = left.iter().map(|&v| DVector::from_element(1, v)).collect();
        let r: Vec<_> = right.iter().map(|&v| DVector::from_element(1, v)).collect();
        let mut value = l.clone();
        if let (Some(last), Some(rl)) = (value.last_mut(), r.last()) {
            *last = rl.clone();
        }
        BVPath::new(grid, l, value, r)
    }

    pub fn dim(&self) -> usize {
        self.value[0].len()
    }

    /// The path value at `t`: node values at nodes, linear in between.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if let Some(k) = self.grid.node_index(t) {
            return self.value[k].clone();
        }
        let k = self.grid.cell_of(t);
        let s = (t - self.grid.t(k)) / self.grid.h(k);
        &self.right[k] * (1.0 - s) + &self.left[k + 1] * s
    }

    pub fn sup_norm(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.value)
            .chain(&self.right)
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    /// Nodes where the path is discontinuous, with `right − left`.
    pub fn jumps(&self, threshold: f64) -> Vec<(usize, DVector<f64>)> {
        (0..self.left.len())
            .filter_map(|k| {
                let d = &self.right[k] - &self.left[k];
                (d.norm() > threshold).then_some((k, d))
            })
            .collect()
    }
}

/// Exact total variation of the piecewise-linear-with-jumps representative
/// (Euclidean norm on ℝᵈ).
pub fn total_variation(path: &BVPath) -> f64 {
    let mut v = 0.0;
    for k in 0..path.left.len() {
        v += (&path.value[k] - &path.left[k]).norm() + (&path.right[k] - &path.value[k]).norm();
        if k + 1 < path.left.len() {
            v += (&path.left[k + 1] - &path.right[k]).norm();
        }
    }
    v
}

/// Shifts a scalar path to vanish at 0 and makes it left-continuous on the
/// open interval; the value at `T` is kept, so `ν(T) = η(T) − η(0)`.
pub fn normalize_bv(path: &BVPath) -> Result<BVPath> {
    if path.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "normalization is defined for scalar paths, got dimension {}",
            path.dim()
        )));
    }
    let base = path.value[0].clone();
    let last = path.left.len() - 1;
    let shift = |v: &DVector<f64>| v - &base;
    let left: Vec<_> = path.left.iter().map(shift).collect();
    let mut value = left.clone();
    value[last] = shift(&path.value[last]);
    let mut right: Vec<_> = path.right.iter().map(shift).collect();
    right[last] = value[last].clone();
    BVPath::new(path.grid.clone(), left, value, right)
}

/// A nonnegative measure on `[0, T]` made of atoms at nodes `t_k` (`k ≥ 1`)
/// and constant densities on cells; `η(t) = dη([0, t))`, plus the terminal
/// atom at `t = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NBVMeasure {
    pub grid: TimeGrid,
    pub atoms: Vec<f64>,
    pub densities: Vec<f64>,
}

impl NBVMeasure {
    pub fn new(grid: TimeGrid, atoms: Vec<f64>, densities: Vec<f64>) -> Result<NBVMeasure> {
        if atoms.len() != grid.nodes().len() || densities.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "measure with {} atoms and {} densities on a grid of {} nodes",
                atoms.len(),
                densities.len(),
                grid.nodes().len()
            )));
        }
        if atoms.iter().chain(&densities).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("atom weights and densities must be finite and >= 0".into()));
        }
        if atoms[0] != 0.0 {
            return Err(Error::InvalidInput(
                "a normalized multiplier cannot carry an atom at t = 0".into(),
            ));
        }
        Ok(NBVMeasure { grid, atoms, densities })
    }

    pub fn zero(grid: &TimeGrid) -> NBVMeasure {
        NBVMeasure {
            grid: grid.clone(),
            atoms: vec![0.0; grid.nodes().len()],
            densities: vec![0.0; grid.n_cells()],
        }
    }

    /// A single atom of weight `w` at node `k`.
    pub fn atom(grid: &TimeGrid, k: usize, w: f64) -> Result<NBVMeasure> {
        let mut atoms = vec![0.0; grid.nodes().len()];
        if k >= atoms.len() {
            return Err(Error::InvalidInput(format!("atom node {k} out of range")));
        }
        atoms[k] = w;
        NBVMeasure::new(grid.clone(), atoms, vec![0.0; grid.n_cells()])
    }

    /// Constant density `c` everywhere.
    pub fn uniform_density(grid: &TimeGrid, c: f64) -> Result<NBVMeasure> {
        NBVMeasure::new(grid.clone(), vec![0.0; grid.nodes().len()], vec![c; grid.n_cells()])
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().chain(&self.densities).all(|w| *w == 0.0)
    }

    pub fn scaled(&self, c: f64) -> NBVMeasure {
        NBVMeasure {
            grid: self.grid.clone(),
            atoms: self.atoms.iter().map(|a| a * c).collect(),
            densities: self.densities.iter().map(|d| d * c).collect(),
        }
    }

    /// `η(T)`, which for a monotone normalized function is also its variation.
    pub fn total(&self) -> f64 {
        self.atoms.iter().sum::<f64>()
            + self
                .densities
                .iter()
                .enumerate()
                .map(|(k, d)| d * self.grid.h(k))
                .sum::<f64>()
    }

    /// `η(t_k)` at every node (left limits inside, full mass at `T`).
    pub fn node_values(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let mut out = vec![0.0; n + 1];
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.atoms[k] + self.densities[k] * self.grid.h(k);
            out[k + 1] = acc;
        }
        out[n] += self.atoms[n];
        out
    }

    /// `η(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let g = &self.grid;
        if let Some(k) = g.node_index(t) {
            return self.node_values()[k];
        }
        let k = g.cell_of(t);
        let vals = self.node_values();
        vals[k] + self.atoms[k] + self.densities[k] * (t - g.t(k))
    }

    pub fn to_path(&self) -> BVPath {
        let n = self.grid.n_cells();
        let vals = self.node_values();
        let mut left = vals.clone();
        left[n] = vals[n] - self.atoms[n];
        let right: Vec<f64> = (0..=n)
            .map(|k| if k == n { vals[n] } else { vals[k] + self.atoms[k] })
            .collect();
        BVPath::scalar(self.grid.clone(), &left, &right).expect("measure paths are well formed")
    }

    /// Reads the measure `dν` off a nondecreasing scalar path.
    pub fn from_path(path: &BVPath) -> Result<NBVMeasure> {
        if path.dim() != 1 {
            return Err(Error::InvalidInput("multiplier paths must be scalar".into()));
        }
        let n = path.grid.n_cells();
        let x = |v: &DVector<f64>| v[0];
        let mut atoms = vec![0.0; n + 1];
        for (k, a) in atoms.iter_mut().enumerate().skip(1) {
            *a = if k == n {
                x(&path.value[n]) - x(&path.left[n])
            } else {
                x(&path.right[k]) - x(&path.left[k])
            };
        }
        let densities: Vec<f64> = (0..n)
            .map(|k| (x(&path.left[k + 1]) - x(&path.right[k])) / path.grid.h(k))
            .collect();
        let tol = 1e-12 * (1.0 + path.sup_norm());
        let monotone = (0..=n).all(|k| {
            x(&path.value[k]) >= x(&path.left[k]) - tol && x(&path.right[k]) >= x(&path.value[k]) - tol
        });
        if !monotone || atoms.iter().chain(&densities).any(|w| *w < -tol) {
            return Err(Error::InvalidInput("path is not nondecreasing".into()));
        }
        let clip = |v: Vec<f64>| v.into_iter().map(|w| w.max(0.0)).collect();
        NBVMeasure::new(path.grid.clone(), clip(atoms), clip(densities))
    }

    /// Re-expresses the measure on a grid that refines its own.
    pub fn resample(&self, fine: &TimeGrid) -> Result<NBVMeasure> {
        if !fine.refines(&self.grid) {
            return Err(Error::InvalidInput(
                "target grid must contain every node of the measure grid".into(),
            ));
        }
        let mut atoms = vec![0.0; fine.nodes().len()];
        for (k, &a) in self.atoms.iter().enumerate() {
            if a != 0.0 {
                let i = fine.node_index(self.grid.t(k)).expect("refinement checked");
                atoms[i] += a;
            }
        }
        let densities = (0..fine.n_cells())
            .map(|c| self.densities[self.grid.cell_of(fine.mid(c))])
            .collect();
        NBVMeasure::new(fine.clone(), atoms, densities)
    }
}

fn check_range(grid: &TimeGrid, from: f64, to: f64) -> Result<(f64, f64)> {
    let t_final = grid.t_final();
    let tol = 1e-12 * t_final;
    if !(from >= -tol && to <= t_final + tol && from <= to + tol) {
        return Err(Error::Range { from, to, t_final });
    }
    Ok((from.clamp(0.0, t_final), to.clamp(0.0, t_final)))
}

/// Whether node `k` carries an atom counted by `∫_from^to`.
fn owns_atom(grid: &TimeGrid, k: usize, from: f64, to: f64) -> bool {
    let tol = 1e-12 * grid.t_final();
    let t = grid.t(k);
    let last = k == grid.n_cells();
    t >= from - tol && (t < to - tol || (last && to >= grid.t_final() - tol && from < t - tol))
}

/// `∫_from^to z dη` for `z` sampled at the measure's grid nodes: atoms are
/// exact, densities use the trapezoid rule (on clipped cells with linearly
/// interpolated `z`).
pub fn stieltjes_integral(z: &[f64], eta: &NBVMeasure, from: f64, to: f64) -> Result<f64> {
    let g = &eta.grid;
    if z.len() != g.nodes().len() {
        return Err(Error::DimensionMismatch(format!(
            "integrand has {} samples for {} nodes",
            z.len(),
            g.nodes().len()
        )));
    }
    let (from, to) = check_range(g, from, to)?;
    let mut sum = 0.0;
    for (k, &a) in eta.atoms.iter().enumerate() {
        if a != 0.0 && owns_atom(g, k, from, to) {
            sum += z[k] * a;
        }
    }
    for (c, &d) in eta.densities.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let a = g.t(c).max(from);
        let b = g.t(c + 1).min(to);
        if b > a {
            let za = g.interpolate(z, a);
            let zb = g.interpolate(z, b);
            sum += d * (b - a) * 0.5 * (za + zb);
        }
    }
    Ok(sum)
}

/// `∫_0^T z dη` with Simpson's rule on the densities, given node samples and
/// cell-midpoint samples of a continuous `z`.
pub fn stieltjes_simpson(z_nodes: &[f64], z_mid: &[f64], eta: &NBVMeasure) -> f64 {
    let g = &eta.grid;
    let mut sum: f64 = eta.atoms.iter().zip(z_nodes).map(|(a, z)| a * z).sum();
    for (c, &d) in eta.densities.iter().enumerate() {
        if d != 0.0 {
            sum += d * simpson(g.h(c), z_nodes[c], z_mid[c], z_nodes[c + 1]);
        }
    }
    sum
}

/// `|LHS − RHS|` of the Fubini-type exchange
/// `∫_0^T (∫_0^τ Φ(τ,s) ds) dη(τ) = ∫_0^T ∫_s^T Φ(τ,s) dη(τ) ds`
/// for `Φ` sampled as `phi[(i, j)] = Φ(t_i, t_j)` on the measure's grid.
/// All Lebesgue integrals use the trapezoid rule; in the outer `ds`
/// integral the inner integral is taken with its one-sided limits at
/// the cell ends.
pub fn fubini_residual(phi: &DMatrix<f64>, eta: &NBVMeasure) -> Result<f64> {
    let g = &eta.grid;
    let len = g.nodes().len();
    if phi.nrows() != len || phi.ncols() != len {
        return Err(Error::DimensionMismatch(format!(
            "Φ is {}×{}, expected {len}×{len}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let n = len - 1;

    // LHS: inner ds integral at each τ_i, then Stieltjes in τ.
    let inner: Vec<f64> = (0..len)
        .map(|i| (0..i).map(|j| 0.5 * g.h(j) * (phi[(i, j)] + phi[(i, j + 1)])).sum())
        .collect();
    let lhs = stieltjes_integral(&inner, eta, 0.0, g.t_final())?;

    // RHS: G(s) = ∫_s^T Φ(τ,s) dη(τ). `after[j]` excludes the atom at s_j
    // (right limit), `upto[j]` includes it (left limit).
    let mut after = vec![0.0; len];
    let mut upto = vec![0.0; len];
    for j in 0..len {
        let mut acc = 0.0;
        for k in j + 1..len {
            acc += phi[(k, j)] * eta.atoms[k];
        }
        for c in j..n {
            let d = eta.densities[c];
            if d != 0.0 {
                acc += d * 0.5 * g.h(c) * (phi[(c, j)] + phi[(c + 1, j)]);
            }
        }
        after[j] = acc;
        upto[j] = acc + phi[(j, j)] * eta.atoms[j];
    }
    let rhs: f64 = (0..n).map(|j| 0.5 * g.h(j) * (after[j] + upto[j + 1])).sum();
    Ok((lhs - rhs).abs())
}
