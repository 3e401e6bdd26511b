use crate::error::{Error, Result};

/// Strictly increasing nodes `0 = t_0 < … < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<TimeGrid> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("a time grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidInput(format!("grid must start at 0, got {}", nodes[0])));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    /// `n_cells` equal cells on `[0, t_final]`; the last node is `t_final` exactly.
    pub fn uniform(t_final: f64, n_cells: usize) -> Result<TimeGrid> {
        if n_cells == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidInput(format!(
                "uniform grid needs N >= 1 and T > 0 (got N = {n_cells}, T = {t_final})"
            )));
        }
        let mut nodes: Vec<f64> = (0..=n_cells)
            .map(|k| t_final * k as f64 / n_cells as f64)
            .collect();
        nodes[n_cells] = t_final;
        Ok(TimeGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn t_final(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn h(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn mid(&self, k: usize) -> f64 {
        0.5 * (self.nodes[k] + self.nodes[k + 1])
    }

    fn tol(&self) -> f64 {
        1e-12 * self.t_final()
    }

    /// Index of the cell `[t_k, t_{k+1})` containing `t`; `t = T` maps to the
    /// last cell.
    pub fn cell_of(&self, t: f64) -> usize {
        let n = self.n_cells();
        match self.nodes.partition_point(|&x| x <= t) {
            0 => 0,
            p => (p - 1).min(n - 1),
        }
    }

    /// Index of the node within `1e-12·T` of `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = self.tol();
        let p = self.nodes.partition_point(|&x| x < t - tol);
        (p < self.nodes.len() && (self.nodes[p] - t).abs() <= tol).then_some(p)
    }

    /// True when every node of `coarse` is (within `1e-12·T`) a node of `self`.
    pub fn refines(&self, coarse: &TimeGrid) -> bool {
        (self.t_final() - coarse.t_final()).abs() <= self.tol()
            && coarse.nodes.iter().all(|&t| self.node_index(t).is_some())
    }

    /// Sorted union of both node sets plus `extra`, merging points closer than
    /// `1e-12·T` (the earlier grid's value wins).
    pub fn union_with(&self, other: &[f64]) -> TimeGrid {
        let tol = self.tol();
        let t_final = self.t_final();
        let mut pts: Vec<f64> = self
            .nodes
            .iter()
            .copied()
            .chain(other.iter().copied().filter(|t| *t > 0.0 && *t < t_final))
            .collect();
        pts.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(pts.len());
        for t in pts {
            match out.last() {
                Some(&last) if t - last <= tol => {}
                _ => out.push(t),
            }
        }
        // keep T exact
        let last = out.len() - 1;
        if out[last] != t_final {
            if t_final - out[last] <= tol {
                out[last] = t_final;
            } else {
                out.push(t_final);
            }
        }
        TimeGrid { nodes: out }
    }

    /// Splits every cell into `factor` equal parts.
    pub fn refine_uniform(&self, factor: usize) -> TimeGrid {
        let factor = factor.max(1);
        let mut nodes = Vec::with_capacity(self.n_cells() * factor + 1);
        for k in 0..self.n_cells() {
            let (a, h) = (self.t(k), self.h(k));
            for i in 0..factor {
                nodes.push(a + h * i as f64 / factor as f64);
            }
        }
        nodes.push(self.t_final());
        TimeGrid { nodes }
    }

    /// Linear interpolation of node samples.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let k = self.cell_of(t);
        let s = ((t - self.t(k)) / self.h(k)).clamp(0.0, 1.0);
        values[k] + s * (values[k + 1] - values[k])
    }
}

/// One-sided samples of a function on each cell: its value at the cell start
/// (right limit), midpoint and end (left limit). This lets coefficients jump
/// at nodes, as they do when the control is piecewise constant.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSeries<T> {
    pub grid: TimeGrid,
    pub start: Vec<T>,
    pub mid: Vec<T>,
    pub end: Vec<T>,
}

impl<T: Clone> CellSeries<T> {
    pub fn new(grid: TimeGrid, start: Vec<T>, mid: Vec<T>, end: Vec<T>) -> Result<Self> {
        let n = grid.n_cells();
        if start.len() != n || mid.len() != n || end.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cell series lengths {}/{}/{} on a grid with {n} cells",
                start.len(),
                mid.len(),
                end.len()
            )));
        }
        Ok(CellSeries { grid, start, mid, end })
    }

    pub fn constant(grid: &TimeGrid, value: T) -> Self {
        let n = grid.n_cells();
        CellSeries {
            grid: grid.clone(),
            start: vec![value.clone(); n],
            mid: vec![value.clone(); n],
            end: vec![value; n],
        }
    }

    /// Samples a function that is continuous inside each cell.
    pub fn from_fn(grid: &TimeGrid, mut f: impl FnMut(f64) -> T) -> Self {
        let n = grid.n_cells();
        let mut start = Vec::with_capacity(n);
        let mut mid = Vec::with_capacity(n);
        let mut end = Vec::with_capacity(n);
        for k in 0..n {
            start.push(f(grid.t(k)));
            mid.push(f(grid.mid(k)));
            end.push(f(grid.t(k + 1)));
        }
        CellSeries { grid: grid.clone(), start, mid, end }
    }

    pub fn try_from_fn<E>(grid: &TimeGrid, mut f: impl FnMut(usize, f64) -> Result<T, E>) -> Result<Self, E> {
        let n = grid.n_cells();
        let mut start = Vec::with_capacity(n);
        let mut mid = Vec::with_capacity(n);
        let mut end = Vec::with_capacity(n);
        for k in 0..n {
            start.push(f(k, grid.t(k))?);
            mid.push(f(k, grid.mid(k))?);
            end.push(f(k, grid.t(k + 1))?);
        }
        Ok(CellSeries { grid: grid.clone(), start, mid, end })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> CellSeries<U> {
        CellSeries {
            grid: self.grid.clone(),
            start: self.start.iter().map(&mut f).collect(),
            mid: self.mid.iter().map(&mut f).collect(),
            end: self.end.iter().map(&mut f).collect(),
        }
    }
}

/// Simpson's rule on one cell.
#[inline]
pub(crate) fn simpson<T>(h: f64, g0: T, gm: T, g1: T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    (g0 + gm * 4.0 + g1) * (h / 6.0)
}

/// Integral over the first half of a cell from the start, midpoint and end
/// samples of the quadratic interpolant.
#[inline]
pub(crate) fn first_half<T>(h: f64, g0: T, gm: T, g1: T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    (g0 * 5.0 + gm * 8.0 + g1 * -1.0) * (h / 24.0)
}

/// Mirror of [`first_half`]: the integral over the second half.
#[inline]
pub(crate) fn second_half<T>(h: f64, g0: T, gm: T, g1: T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    (g0 * -1.0 + gm * 8.0 + g1 * 5.0) * (h / 24.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_exactly() {
        let g = TimeGrid::uniform(0.3, 7).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t_final(), 0.3);
        assert_eq!(g.n_cells(), 7);
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.cell_of(0.0), 0);
        assert_eq!(g.cell_of(0.25), 1);
        assert_eq!(g.cell_of(0.3), 1);
        assert_eq!(g.cell_of(1.0), 3);
        assert_eq!(g.node_index(0.5), Some(2));
        assert_eq!(g.node_index(0.51), None);
    }

    #[test]
    fn union_and_refinement() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let u = g.union_with(&[0.25, 0.5 + 1e-15, 0.75, 1.0]);
        assert_eq!(u.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(u.refines(&g));
        assert!(!g.refines(&u));
        assert_eq!(g.refine_uniform(2).nodes(), u.nodes());
    }

    #[test]
    fn half_cell_rules_are_exact_for_quadratics() {
        let f = |t: f64| 1.0 + 2.0 * t - 3.0 * t * t;
        let big_f = |t: f64| t + t * t - t * t * t;
        let h = 0.7;
        let (g0, gm, g1) = (f(0.0), f(h / 2.0), f(h));
        assert!((simpson(h, g0, gm, g1) - big_f(h)).abs() < 1e-14);
        assert!((first_half(h, g0, gm, g1) - big_f(h / 2.0)).abs() < 1e-14);
        assert!((second_half(h, g0, gm, g1) - (big_f(h) - big_f(h / 2.0))).abs() < 1e-14);
    }
}
