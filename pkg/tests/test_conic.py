import itertools
import math

import numpy as np
import pytest

from ssmsim.conic import ConeError, ProblemBuilder, SolverSettings, solve_continuous, solve_mixed
from ssmsim.conic.cones import in_exp, proj_exp, proj_nonneg, proj_soc

BACKENDS = [SolverSettings(backend="admm"), SolverSettings(backend="clarabel")]
# the analytic suite asks for objective errors of 1e-5, so both backends run tighter
TIGHT = [SolverSettings(backend="admm", tol_feas=1e-8, tol_gap=1e-8),
         SolverSettings(backend="clarabel", tol_feas=1e-8, tol_gap=1e-8)]


# --- problems with known optima -----------------------------------------------------

def exp_min_z():
    b = ProblemBuilder()
    z = b.var("z")[0]
    b.maximize([z], -1.0)
    b.add("exp", [([], [], 1.0), ([], [], 1.0), ([z], [1.0], 0.0)])
    return b.build(), -math.e


def soc_unit():
    b = ProblemBuilder()
    x = b.var("x")[0]
    b.maximize([x], 1.0)
    b.add("soc", [([], [], 1.0), ([x], [1.0], 0.0), ([], [], 0.0)])
    return b.build(), 1.0


def lp_simplex():
    b = ProblemBuilder()
    x = b.var("x", 2)
    b.maximize(x, 1.0)
    b.add("nonneg", [(x, [-1.0, -1.0], 1.0), ([x[0]], [1.0], 0.0), ([x[1]], [1.0], 0.0)])
    return b.build(), 1.0


def zero_cone():
    b = ProblemBuilder()
    x = b.var("x")[0]
    b.maximize([x], 1.0)
    b.add("zero", [([x], [1.0], -2.0)])
    return b.build(), 2.0


def soc_diagonal():
    b = ProblemBuilder()
    x = b.var("x", 2)
    b.maximize(x, 1.0)
    b.add("soc", [([], [], 1.0), ([x[0]], [1.0], 0.0), ([x[1]], [1.0], 0.0)])
    return b.build(), math.sqrt(2)


def exp_log_two():
    # max x with (x, 1, 2) in K_exp, i.e. e^x <= 2
    b = ProblemBuilder()
    x = b.var("x")[0]
    b.maximize([x], 1.0)
    b.add("exp", [([x], [1.0], 0.0), ([], [], 1.0), ([], [], 2.0)])
    return b.build(), math.log(2)


def exp_log_bounded():
    # max t with e^t <= u, u <= 3
    b = ProblemBuilder()
    t, u = b.var("t")[0], b.var("u")[0]
    b.maximize([t], 1.0)
    b.add("exp", [([t], [1.0], 0.0), ([], [], 1.0), ([u], [1.0], 0.0)])
    b.add("nonneg", [([u], [-1.0], 3.0)])
    return b.build(), math.log(3)


def lp_equality():
    b = ProblemBuilder()
    x, y = b.var("x")[0], b.var("y")[0]
    b.maximize([x, y], [3.0, 2.0])
    b.add("zero", [([x, y], [1.0, 1.0], -4.0)])
    b.add("nonneg", [([x], [-1.0], 1.0), ([y], [1.0], 0.0)])
    return b.build(), 9.0


def squared_norm_epigraph():
    # min d with ||(1, 2)||^2 <= d, as ||(2x, d - 1)|| <= d + 1
    b = ProblemBuilder()
    d = b.var("d")[0]
    b.maximize([d], -1.0)
    b.add("soc", [([d], [1.0], 1.0), ([], [], 2.0), ([], [], 4.0), ([d], [1.0], -1.0)])
    return b.build(), -5.0


def rotated_cone():
    # max r with r^2 <= tau f, tau <= 1/2, f <= 2
    b = ProblemBuilder()
    r, tau, f = b.var("r")[0], b.var("tau")[0], b.var("f")[0]
    b.maximize([r], 1.0)
    b.add("soc", [([f, tau], [1.0, 1.0], 0.0), ([r], [math.sqrt(2)], 0.0),
                  ([f], [1.0], 0.0), ([tau], [1.0], 0.0)])
    b.add("nonneg", [([tau], [-1.0], 0.5), ([f], [-1.0], 2.0)])
    return b.build(), 1.0


def power_of_two():
    # min e with e >= 2^f, f = 3
    b = ProblemBuilder()
    e, f = b.var("e")[0], b.var("f")[0]
    b.maximize([e], -1.0)
    b.add("exp", [([f], [math.log(2)], 0.0), ([], [], 1.0), ([e], [1.0], 0.0)])
    b.add("zero", [([f], [1.0], -3.0)])
    return b.build(), -8.0


def mixed_cones():
    # max x + y with x^2 + y^2 <= 1 and e^y <= z, z = 1: y <= 0, so x = 1, y = 0
    b = ProblemBuilder()
    x, y, z = b.var("x")[0], b.var("y")[0], b.var("z")[0]
    b.maximize([x, y], 1.0)
    b.add("soc", [([], [], 1.0), ([x], [1.0], 0.0), ([y], [1.0], 0.0)])
    b.add("exp", [([y], [1.0], 0.0), ([], [], 1.0), ([z], [1.0], 0.0)])
    b.add("zero", [([z], [1.0], -1.0)])
    return b.build(), 1.0


PROBLEMS = [exp_min_z, soc_unit, lp_simplex, zero_cone, soc_diagonal, exp_log_two,
            exp_log_bounded, lp_equality, squared_norm_epigraph, rotated_cone, power_of_two,
            mixed_cones]


@pytest.mark.parametrize("settings", TIGHT, ids=lambda s: s.backend)
@pytest.mark.parametrize("make", PROBLEMS, ids=lambda f: f.__name__)
def test_known_optimum(make, settings):
    p, truth = make()
    sol = solve_continuous(p, settings)
    assert sol.status == "optimal"
    assert abs(sol.objective - truth) <= 1e-5
    assert sol.primal_res <= 1e-6 and sol.dual_res <= 1e-6


@pytest.mark.parametrize("settings", BACKENDS, ids=lambda s: s.backend)
def test_infeasible(settings):
    b = ProblemBuilder()
    x = b.var("x")[0]
    b.maximize([x], 1.0)
    b.add("nonneg", [([x], [1.0], -1.0), ([x], [-1.0], 0.0)])
    assert solve_continuous(b.build(), settings).status == "infeasible"


@pytest.mark.parametrize("settings", BACKENDS, ids=lambda s: s.backend)
def test_unbounded(settings):
    b = ProblemBuilder()
    x = b.var("x")[0]
    b.maximize([x], 1.0)
    b.add("nonneg", [([x], [1.0], 0.0)])
    assert solve_continuous(b.build(), settings).status == "unbounded"


def test_malformed_blocks():
    b = ProblemBuilder()
    x = b.var("x")[0]
    with pytest.raises(ConeError):
        b.add("exp", [([x], [1.0], 0.0)])
    with pytest.raises(ConeError):
        b.add("soc", [([x], [1.0], 0.0)])
    with pytest.raises(ConeError):
        b.add("psd", [([x], [1.0], 0.0)])


def test_problem_dump(tmp_path):
    p, _ = rotated_cone()
    p.dump(tmp_path / "p.json")
    d = p.to_json()
    assert d["cones"]["soc"] == [4] and d["n_vars"] == 3


# --- branch and bound -------------------------------------------------------------

@pytest.mark.parametrize("settings", BACKENDS, ids=lambda s: s.backend)
def test_bnb_single_binary(settings):
    b = ProblemBuilder()
    a = b.var("a", binary=True)[0]
    b.maximize([a], 1.0)
    sol = solve_mixed(b.build(), settings)
    assert sol.status == "optimal" and round(sol.x[a]) == 1


@pytest.mark.parametrize("settings", BACKENDS, ids=lambda s: s.backend)
def test_bnb_gated_variable(settings):
    b = ProblemBuilder()
    x, a = b.var("x")[0], b.var("a", binary=True)[0]
    b.maximize([x], 1.0)
    b.add("nonneg", [([x, a], [-1.0, 0.6], 0.0), ([x], [1.0], 0.0)])
    sol = solve_mixed(b.build(), settings)
    assert sol.objective == pytest.approx(0.6, abs=1e-5) and sol.x[a] == 1


@pytest.mark.parametrize("settings", BACKENDS, ids=lambda s: s.backend)
def test_bnb_knapsack(settings):
    b = ProblemBuilder()
    a = b.var("a", 2, binary=True)
    b.maximize(a, [3.0, 2.0])
    b.add("nonneg", [(a, [-2.0, -2.0], 3.0)])
    sol = solve_mixed(b.build(), settings)
    assert sol.objective == pytest.approx(3.0, abs=1e-5)
    assert sol.x[a].tolist() == [1.0, 0.0]


def random_misocp(rng, nb):
    """max c^T x + d^T a  s.t. ||x|| <= 1 + w^T a, A x <= 1 + V a, a binary."""
    n = 3
    b = ProblemBuilder()
    x = b.var("x", n)
    a = b.var("a", nb, binary=True)
    b.maximize(x, rng.normal(size=n))
    b.maximize(a, -rng.uniform(0.1, 1.0, nb))
    w = rng.uniform(0, 1, nb)
    b.add("soc", [(a, w, 1.0)] + [([x[i]], [1.0], 0.0) for i in range(n)])
    A, V = rng.normal(size=(4, n)), rng.uniform(-0.5, 1, (4, nb))
    b.add("nonneg", [(np.concatenate([x, a]), np.concatenate([-A[r], V[r]]), 1.0)
                     for r in range(4)])
    return b.build()


@pytest.mark.parametrize("seed", range(6))
def test_bnb_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    nb = [3, 5, 8, 10, 12, 6][seed]
    p = random_misocp(rng, nb)
    settings = SolverSettings(backend="clarabel", tol_feas=1e-9, tol_gap=1e-9)
    best = -np.inf
    for bits in itertools.product((0, 1), repeat=nb):
        leaf = solve_continuous(p.with_fixings(dict(zip(p.binary_idx.tolist(), bits))), settings)
        if leaf.ok:
            best = max(best, leaf.objective)
    sol = solve_mixed(p, settings)
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert np.all(np.isin(sol.x[p.binary_idx], (0.0, 1.0)))


def test_bnb_infeasible_root():
    b = ProblemBuilder()
    a = b.var("a", binary=True)[0]
    b.maximize([a], 1.0)
    b.add("nonneg", [([a], [1.0], -2.0)])
    assert solve_mixed(b.build(), SolverSettings(backend="clarabel")).status == "infeasible"


def test_bnb_hints_seed_incumbent():
    rng = np.random.default_rng(7)
    p = random_misocp(rng, 6)
    s = SolverSettings(backend="clarabel", tol_feas=1e-9, tol_gap=1e-9)
    plain = solve_mixed(p, s)
    hinted = solve_mixed(p, s, hints=[{int(j): 0 for j in p.binary_idx}])
    assert hinted.objective == pytest.approx(plain.objective, abs=1e-7)


# --- projections ----------------------------------------------------------------------

def test_projection_idempotent():
    rng = np.random.default_rng(0)
    V = rng.normal(scale=3.0, size=(10_000, 4))
    for v in V:
        p = proj_nonneg(v)
        assert np.array_equal(proj_nonneg(p), p)
        q = proj_soc(v)
        assert np.max(np.abs(proj_soc(q) - q)) <= 1e-12
    for v in V[:, :3]:
        e = proj_exp(v)
        assert np.max(np.abs(proj_exp(e) - e)) <= 1e-12 * max(1.0, np.abs(e).max())
        assert in_exp(e, tol=1e-12)


def _brute_exp_dist2(v):
    """Squared distance to K_exp by dense search over the boundary and faces."""
    r, s, t = v
    best = min(float(np.sum((v - [min(r, 0.0), 0.0, max(t, 0.0)]) ** 2)), float(v @ v))
    rho = np.linspace(-30, 10, 4001)
    d = np.stack([rho, np.ones_like(rho), np.exp(rho)], axis=1)
    y = np.maximum(d @ v / np.sum(d * d, axis=1), 0.0)     # best scale per direction
    best = min(best, float(np.min(np.sum((v[None] - y[:, None] * d) ** 2, axis=1))))
    if s > 0:
        best = min(best, max(0.0, s * math.exp(min(r / s, 300.0)) - t) ** 2)
    return best


def test_exp_projection_membership_and_optimality():
    rng = np.random.default_rng(1)
    V = rng.normal(scale=3.0, size=(10_000, 3))
    for v in V:
        p = proj_exp(v)
        assert in_exp(p, tol=1e-12) or (p[1] <= 0 and p[0] <= 0 and p[2] >= 0)
        assert abs(p @ (v - p)) <= 1e-8 * max(1.0, v @ v)
    for v in V[:500]:
        d2 = float(np.sum((v - proj_exp(v)) ** 2))
        assert d2 <= _brute_exp_dist2(v) + 1e-9
    assert in_exp((0.0, 1.0, 1.0))
