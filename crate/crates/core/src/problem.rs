//! Problem definitions and their TOML/JSON configuration format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr, Wrt};

/// The admissible control set.
#[derive(Clone, Debug, PartialEq)]
pub enum Omega {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite { points: Vec<Vec<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Omega {
    pub fn dim(&self) -> usize {
        match self {
            Omega::Box { lo, .. } => lo.len(),
            Omega::Finite { points } => points[0].len(),
            Omega::Ball { center, .. } => center.len(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self {
            Omega::Box { lo, hi } => {
                if lo.len() != m || hi.len() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "omega box bounds have lengths {} and {}, expected m = {m}",
                        lo.len(),
                        hi.len()
                    )));
                }
                for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
                    if !(l.is_finite() && h.is_finite()) || l > h {
                        return bad(format!("omega box axis {}: need finite lo <= hi", i + 1));
                    }
                }
            }
            Omega::Finite { points } => {
                if points.is_empty() {
                    return bad("omega finite set is empty".into());
                }
                if let Some(p) = points.iter().find(|p| p.len() != m) {
                    return Err(Error::DimensionMismatch(format!(
                        "omega point of length {}, expected m = {m}",
                        p.len()
                    )));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("omega points must be finite".into());
                }
            }
            Omega::Ball { center, radius } => {
                if center.len() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "omega ball center of length {}, expected m = {m}",
                        center.len()
                    )));
                }
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return bad("omega ball needs a finite center and radius > 0".into());
                }
            }
        }
        Ok(())
    }

    /// A representative interior point: the box or ball center, or the first
    /// listed point of a finite set.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Omega::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Omega::Finite { points } => points[0].clone(),
            Omega::Ball { center, .. } => center.clone(),
        }
    }

    /// The componentwise-largest "corner": box `hi`, the last finite point,
    /// or the ball point furthest along the first axis.
    pub fn upper(&self) -> Vec<f64> {
        match self {
            Omega::Box { hi, .. } => hi.clone(),
            Omega::Finite { points } => points[points.len() - 1].clone(),
            Omega::Ball { center, radius } => {
                let mut v = center.clone();
                v[0] += radius;
                v
            }
        }
    }

    /// Extreme points used as default candidate controls: box corners
    /// (all 2^m for m <= 10, otherwise just `lo` and `hi`), every point of a
    /// finite set, or the ball's axis extremes.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        match self {
            Omega::Box { lo, hi } => {
                let m = lo.len();
                if m > 10 {
                    return vec![lo.clone(), hi.clone()];
                }
                (0..1usize << m)
                    .map(|mask| {
                        (0..m)
                            .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                            .collect()
                    })
                    .collect()
            }
            Omega::Finite { points } => points.clone(),
            Omega::Ball { center, radius } => {
                let mut out = Vec::new();
                for i in 0..center.len() {
                    for s in [-1.0, 1.0] {
                        let mut v = center.clone();
                        v[i] += s * radius;
                        out.push(v);
                    }
                }
                out
            }
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            Omega::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            Omega::Finite { points } => points
                .iter()
                .any(|p| p.iter().zip(v).all(|(a, b)| (a - b).abs() <= tol)),
            Omega::Ball { center, radius } => {
                let d2: f64 = v.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                d2.sqrt() <= radius + tol
            }
        }
    }

    /// Largest sup-norm of any element.
    pub fn linf_bound(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        match self {
            Omega::Box { lo, hi } => m(lo).max(m(hi)),
            Omega::Finite { points } => points.iter().map(|p| m(p)).fold(0.0, f64::max),
            Omega::Ball { center, radius } => m(center) + radius,
        }
    }
}

/// Optional per-problem overrides of the checker tolerances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub feasibility: Option<f64>,
    pub hamiltonian: Option<f64>,
    pub slackness: Option<f64>,
    pub transversality: Option<f64>,
    pub nontriviality: Option<f64>,
}

/// A fully validated optimal control problem: minimise `psi(q(T))` subject to
/// `q' = f(q, u, t)`, `q(0) = q0`, `G(q(t), t) <= 0` and `u(t)` in `omega`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub n: usize,
    pub m: usize,
    pub f: Vec<Expr>,
    pub psi: Expr,
    pub g: Vec<Expr>,
    pub omega: Omega,
    pub q0: Vec<f64>,
    pub t_final: f64,
    pub tolerances: ToleranceOverrides,
}

impl Problem {
    /// Builds a problem from expression strings, applying every check the
    /// config loader applies.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        f: &[&str],
        psi: &str,
        g: &[&str],
        omega: Omega,
        q0: Vec<f64>,
        t_final: f64,
    ) -> Result<Problem> {
        let raw = RawProblem {
            n: Some(n),
            m: Some(m),
            j: None,
            f: Some(f.iter().map(|s| s.to_string()).collect()),
            psi: Some(psi.to_string()),
            g: Some(g.iter().map(|s| s.to_string()).collect()),
            q0: Some(q0),
            t_final: Some(t_final),
            omega: Some(omega.into()),
            tolerances: None,
        };
        raw.build()
    }

    pub fn j(&self) -> usize {
        self.g.len()
    }

    pub fn dynamics(&self, q: &[f64], u: &[f64], t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.n);
        for (i, e) in self.f.iter().enumerate() {
            out[i] = e.eval(q, u, t).map_err(Error::eval(t))?;
        }
        Ok(out)
    }

    /// `∂f/∂q` as an n×n matrix (row i holds the gradient of f_i).
    pub fn jac_state(&self, q: &[f64], u: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.jacobian(Wrt::State, self.n, q, u, t)
    }

    /// `∂f/∂u` as an n×m matrix.
    pub fn jac_control(&self, q: &[f64], u: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.jacobian(Wrt::Control, self.m, q, u, t)
    }

    fn jacobian(&self, wrt: Wrt, cols: usize, q: &[f64], u: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, cols);
        for (i, e) in self.f.iter().enumerate() {
            let row = e.differentiate(wrt, q, u, t).map_err(Error::eval(t))?;
            for (c, v) in row.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }

    fn no_control(&self) -> Vec<f64> {
        vec![0.0; self.m]
    }

    pub fn cost(&self, q: &[f64]) -> Result<f64> {
        let t = self.t_final;
        self.psi.eval(q, &self.no_control(), t).map_err(Error::eval(t))
    }

    pub fn cost_gradient(&self, q: &[f64]) -> Result<DVector<f64>> {
        let t = self.t_final;
        let g = self
            .psi
            .differentiate(Wrt::State, q, &self.no_control(), t)
            .map_err(Error::eval(t))?;
        Ok(DVector::from_vec(g))
    }

    pub fn constraints(&self, q: &[f64], t: f64) -> Result<Vec<f64>> {
        let u = self.no_control();
        self.g
            .iter()
            .map(|e| e.eval(q, &u, t).map_err(Error::eval(t)))
            .collect()
    }

    pub fn constraint_gradient(&self, i: usize, q: &[f64], t: f64) -> Result<DVector<f64>> {
        let g = self.g[i]
            .differentiate(Wrt::State, q, &self.no_control(), t)
            .map_err(Error::eval(t))?;
        Ok(DVector::from_vec(g))
    }
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum RawOmega {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite { points: Vec<Vec<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl From<Omega> for RawOmega {
    fn from(o: Omega) -> Self {
        match o {
            Omega::Box { lo, hi } => RawOmega::Box { lo, hi },
            Omega::Finite { points } => RawOmega::Finite { points },
            Omega::Ball { center, radius } => RawOmega::Ball { center, radius },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n: Option<usize>,
    m: Option<usize>,
    j: Option<usize>,
    f: Option<Vec<String>>,
    psi: Option<String>,
    #[serde(rename = "G")]
    g: Option<Vec<String>>,
    q0: Option<Vec<f64>>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    omega: Option<RawOmega>,
    tolerances: Option<ToleranceOverrides>,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingField(name.to_string()))
}

impl RawProblem {
    fn build(self) -> Result<Problem> {
        let n = need(self.n, "n")?;
        let m = need(self.m, "m")?;
        if n == 0 || m == 0 {
            return Err(Error::InvalidConfig("n and m must be at least 1".into()));
        }
        let f_src = need(self.f, "f")?;
        let psi_src = need(self.psi, "psi")?;
        let g_src = self.g.unwrap_or_default();
        let q0 = need(self.q0, "q0")?;
        let t_final = need(self.t_final, "T")?;
        let omega: Omega = match need(self.omega, "omega")? {
            RawOmega::Box { lo, hi } => Omega::Box { lo, hi },
            RawOmega::Finite { points } => Omega::Finite { points },
            RawOmega::Ball { center, radius } => Omega::Ball { center, radius },
        };

        if f_src.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "f has {} components, expected n = {n}",
                f_src.len()
            )));
        }
        if q0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "q0 has {} components, expected n = {n}",
                q0.len()
            )));
        }
        if let Some(j) = self.j {
            if j != g_src.len() {
                return Err(Error::DimensionMismatch(format!(
                    "G has {} components, expected j = {j}",
                    g_src.len()
                )));
            }
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidConfig(format!("T must be positive, got {t_final}")));
        }
        if q0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("q0 must be finite".into()));
        }
        omega.validate(m)?;
        if let Some(tol) = self.tolerances {
            for v in [tol.feasibility, tol.hamiltonian, tol.slackness, tol.transversality, tol.nontriviality]
                .into_iter()
                .flatten()
            {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidConfig(format!("tolerances must be positive, got {v}")));
                }
            }
        }

        let parse = |field: String, text: &str| {
            parse_expression(text, n, m).map_err(|source| Error::Parse { field, source })
        };
        let f = f_src
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("f[{}]", i + 1), s))
            .collect::<Result<Vec<_>>>()?;
        let psi = parse("psi".into(), &psi_src)?;
        if psi.uses_control() {
            return Err(Error::ConstraintUsesControl("psi".into()));
        }
        let mut g = Vec::with_capacity(g_src.len());
        for (i, s) in g_src.iter().enumerate() {
            let name = format!("G[{}]", i + 1);
            let e = parse(name.clone(), s)?;
            if e.uses_control() {
                return Err(Error::ConstraintUsesControl(name));
            }
            g.push(e);
        }
        Ok(Problem {
            n,
            m,
            f,
            psi,
            g,
            omega,
            q0,
            t_final,
            tolerances: self.tolerances.unwrap_or_default(),
        })
    }
}

/// Parses a problem from TOML, or from JSON when the text starts with `{`.
pub fn load_problem(config: &str) -> Result<Problem> {
    let raw: RawProblem = if config.trim_start().starts_with('{') {
        serde_json::from_str(config).map_err(|e| Error::InvalidConfig(e.to_string()))?
    } else {
        toml::from_str(config).map_err(|e| Error::InvalidConfig(e.to_string()))?
    };
    raw.build()
}

pub fn load_problem_file(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_problem(&text)
}
