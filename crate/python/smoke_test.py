"""Smoke test for the pmpkit_py extension.

Build first:  cargo build -p pmpkit-python --features extension-module
Then run:     python3 python/smoke_test.py [path/to/libpmpkit_py.so]
"""

import importlib.util
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

LQR = """
n = 2
m = 1
f = ["q1 + u1", "(q1^2 + u1^2)/2"]
psi = "q2"
G = []
q0 = [1.0, 0.0]
T = 1.0
omega = { type = "box", lo = [-5.0], hi = [5.0] }
"""


def load(path):
    # the loader wants the bare module name as the file stem
    tmp = Path(tempfile.mkdtemp()) / "pmpkit_py.so"
    shutil.copy(path, tmp)
    spec = importlib.util.spec_from_file_location("pmpkit_py", tmp)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def lqr_control(pk, cells):
    # u = -P q with P' = P^2 - 2P - 1, P(1) = 0, integrated backward by RK4
    sub = 64
    d = 1.0 / (cells * sub)
    p = [0.0] * (cells * sub + 1)
    rhs = lambda y: y * y - 2 * y - 1
    for j in range(cells * sub - 1, -1, -1):
        y = p[j + 1]
        k1 = rhs(y)
        k2 = rhs(y - 0.5 * d * k1)
        k3 = rhs(y - 0.5 * d * k2)
        k4 = rhs(y - d * k3)
        p[j] = y - d / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    q, values = 1.0, []
    for j in range(cells * sub):
        if j % sub == sub // 2:
            values.append([-p[j] * q])
        q += d * (1 - 0.5 * (p[j] + p[j + 1])) * q
    nodes = [k / cells for k in range(cells + 1)]
    return pk.Control(nodes, values)


def main():
    lib = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "target/debug/libpmpkit_py.so"
    pk = load(lib)

    problem = pk.Problem.from_config(LQR)
    assert (problem.n, problem.m, problem.j) == (2, 1, 0)
    assert problem.dynamics([2.0, 0.0], [1.0], 0.0) == [3.0, 2.5]

    center = pk.Control.constant(1.0, 50, [0.0])
    t, states = pk.solve_forward(problem, center)
    assert len(t) == 51 and abs(states[-1][0] - math.e) < 1e-6

    nodes, left, right = pk.assemble_adjoint(problem, center)
    assert right[-1] == [0.0, 1.0]

    cert = pk.check_certificate(problem, center)
    assert cert.verdict == "FAIL" and not cert.passed

    u = lqr_control(pk, 400)
    cert = pk.check_certificate(problem, u)
    assert cert.passed, cert.report()
    assert cert.hamiltonian_sup < 1e-3
    assert [c[0] for c in cert.conditions][:2] == ["feasibility", "transversality"]

    intervals = pk.build_qrho([[1.0], [2.0], [0.5], [3.0]], 0.25, 1.0)
    measure = sum(b - a for a, b in intervals)
    assert abs(measure - 0.25) < 1e-12, measure

    rows = pk.differentiability_probe(problem, center, pk.Control.constant(1.0, 1, [1.0]), [0.2, 0.1], 100)
    assert [r for r, _ in rows] == [0.2, 0.1] and rows[1][1] < rows[0][1]

    eta = pk.Measure([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], [0.5, 0.5])
    assert abs(eta.total() - 1.5) < 1e-15

    try:
        pk.Problem.from_config(LQR.replace("q1 + u1", "q1 + * u1"))
    except pk.ConfigError as e:
        assert "byte" in str(e)
    else:
        raise AssertionError("malformed expression accepted")
    assert issubclass(pk.SolverError, pk.PmpkitError)

    print("smoke test passed")


if __name__ == "__main__":
    main()
