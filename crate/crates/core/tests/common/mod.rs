//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pmpkit::{ControlSignal, NBVMeasure, Omega, Problem, TimeGrid};

/// Scalar LQR written in Mayer form: `q1' = q1 + u1`,
/// `q2' = (q1² + u1²)/2`, minimise `q2(1)`.
pub fn lqr_problem() -> Problem {
    Problem::new(
        2,
        1,
        &["q1 + u1", "(q1^2 + u1^2)/2"],
        "q2",
        &[],
        Omega::Box { lo: vec![-5.0], hi: vec![5.0] },
        vec![1.0, 0.0],
        1.0,
    )
    .unwrap()
}

/// Optimal feedback `u = −P q` from a backward RK4 sweep of
/// `P' = P² − 2P − 1`, `P(1) = 0`, followed by a closed-loop forward sweep;
/// the control is sampled at cell midpoints of a uniform `n`-cell grid.
pub fn lqr_oracle(n: usize) -> (ControlSignal, Vec<f64>) {
    const SUB: usize = 32;
    let t_final = 1.0;
    let fine = n * SUB;
    let d = t_final / fine as f64;
    let rhs = |p: f64| p * p - 2.0 * p - 1.0;
    let mut p = vec![0.0; fine + 1];
    for j in (0..fine).rev() {
        let y = p[j + 1];
        let k1 = rhs(y);
        let k2 = rhs(y - 0.5 * d * k1);
        let k3 = rhs(y - 0.5 * d * k2);
        let k4 = rhs(y - d * k3);
        p[j] = y - d / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    // closed loop with step 2d so that half steps land on stored P values
    let mut q = vec![0.0; fine / 2 + 1];
    q[0] = 1.0;
    for j in 0..fine / 2 {
        let f = |q: f64, i: usize| (1.0 - p[i]) * q;
        let y = q[j];
        let h = 2.0 * d;
        let k1 = f(y, 2 * j);
        let k2 = f(y + 0.5 * h * k1, 2 * j + 1);
        let k3 = f(y + 0.5 * h * k2, 2 * j + 1);
        let k4 = f(y + h * k3, 2 * j + 2);
        q[j + 1] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let grid = TimeGrid::uniform(t_final, n).unwrap();
    // cell midpoint k + 1/2 is fine index (k + 1/2)·SUB, i.e. q index (k·SUB + SUB/2)/2
    let values = (0..n)
        .map(|k| {
            let i = k * SUB + SUB / 2;
            vec![-p[i] * q[i / 2]]
        })
        .collect();
    let p_nodes = (0..=n).map(|k| p[k * SUB] * q[k * SUB / 2]).collect();
    (ControlSignal::new(grid, values).unwrap(), p_nodes)
}

pub const BD_LIMIT: f64 = 1.0 / 9.0;
pub const BD_WEIGHT: f64 = 100.0;

/// Double integrator from `x = 0`, `v = 1` with `x ≤ 1/9`, energy as a third
/// state and the terminal target `x = 0`, `v = −1` as a quadratic penalty.
pub fn bryson_denham_problem() -> Problem {
    let psi = format!("q3 + {}*(q1^2 + (q2 + 1)^2)", BD_WEIGHT / 2.0);
    Problem::new(
        3,
        1,
        &["q2", "u1", "u1^2/2"],
        &psi,
        &["q1 - 1/9"],
        Omega::Box { lo: vec![-20.0], hi: vec![20.0] },
        vec![0.0, 1.0, 0.0],
        1.0,
    )
    .unwrap()
}

/// Convex QP `min ½uᵀHu + cᵀu s.t. Au ≤ b` by a primal-dual interior-point
/// method; returns `(u, λ)`.
pub fn solve_qp(h: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (nv, nc) = (h.nrows(), a.nrows());
    let mut u = DVector::zeros(nv);
    let mut s = (b - a * &u).map(|v| v.max(1.0));
    let mut lam = DVector::from_element(nc, 1.0);
    for _ in 0..500 {
        let rd = h * &u + c + a.transpose() * &lam;
        let rp = a * &u + &s - b;
        let mu = s.dot(&lam) / nc as f64;
        if mu < 1e-14 && rd.amax() < 1e-11 && rp.amax() < 1e-13 {
            break;
        }
        let sigma = 0.1;
        let rc = s.component_mul(&lam).add_scalar(-sigma * mu);
        let dvec = lam.component_div(&s);
        let mut m = h.clone();
        m += a.transpose() * DMatrix::from_diagonal(&dvec) * a;
        let rhs = -(&rd + a.transpose() * (dvec.component_mul(&rp) - rc.component_div(&s)));
        let du = m.cholesky().expect("KKT matrix is SPD").solve(&rhs);
        let ds = -(&rp + a * &du);
        let dl = -(&rc + lam.component_mul(&ds)).component_div(&s);
        let mut alpha: f64 = 1.0;
        for i in 0..nc {
            if ds[i] < 0.0 {
                alpha = alpha.min(-0.99 * s[i] / ds[i]);
            }
            if dl[i] < 0.0 {
                alpha = alpha.min(-0.99 * lam[i] / dl[i]);
            }
        }
        u += alpha * du;
        s += alpha * ds;
        lam += alpha * dl;
    }
    (u, lam)
}

/// Discretize-then-optimize oracle: piecewise-constant controls on `n`
/// cells, exact zero-order-hold dynamics, `x_k ≤ 1/9` at every node.
/// Returns the control and the node multipliers (duals below `1e-8` of the
/// largest are dropped as interior-point residue).
pub fn bryson_denham_oracle(n: usize) -> (ControlSignal, NBVMeasure) {
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let h = 1.0 / n as f64;
    // affine maps x_k = x0[k] + X[k]·u, v_k = v0[k] + V[k]·u
    let mut xm = DMatrix::<f64>::zeros(n + 1, n);
    let mut vm = DMatrix::<f64>::zeros(n + 1, n);
    let mut x0 = DVector::<f64>::zeros(n + 1);
    let mut v0 = DVector::<f64>::zeros(n + 1);
    v0[0] = 1.0;
    for k in 0..n {
        x0[k + 1] = x0[k] + h * v0[k];
        v0[k + 1] = v0[k];
        for j in 0..n {
            xm[(k + 1, j)] = xm[(k, j)] + h * vm[(k, j)];
            vm[(k + 1, j)] = vm[(k, j)];
        }
        xm[(k + 1, k)] += 0.5 * h * h;
        vm[(k + 1, k)] += h;
    }
    let xa = xm.row(n).transpose();
    let va = vm.row(n).transpose();
    let mut hess = DMatrix::<f64>::identity(n, n) * h;
    hess += (&xa * xa.transpose() + &va * va.transpose()) * BD_WEIGHT;
    let c = (&xa * x0[n] + &va * (v0[n] + 1.0)) * BD_WEIGHT;
    let a = xm.rows(1, n).into_owned();
    let b = (x0.rows(1, n).into_owned()).map(|x| BD_LIMIT - x);
    let (u, lam) = solve_qp(&hess, &c, &a, &b);
    let top = lam.amax();
    let mut atoms = vec![0.0; n + 1];
    for k in 0..n {
        if lam[k] > 1e-8 * top {
            atoms[k + 1] = lam[k];
        }
    }
    let control = ControlSignal::new(grid.clone(), u.iter().map(|v| vec![*v]).collect()).unwrap();
    let eta = NBVMeasure::new(grid.clone(), atoms, vec![0.0; n]).unwrap();
    (control, eta)
}

/// `u + delta` on `[a, b)`.
pub fn perturb(u: &ControlSignal, a: f64, b: f64, delta: f64) -> ControlSignal {
    let grid = u.grid.union_with(&[a, b]);
    let values = (0..grid.n_cells())
        .map(|k| {
            let t = grid.mid(k);
            let v = u.value_at(t)[0];
            vec![if t >= a && t < b { v + delta } else { v }]
        })
        .collect();
    ControlSignal::new(grid, values).unwrap()
}

/// Neumaier-compensated sum.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}
