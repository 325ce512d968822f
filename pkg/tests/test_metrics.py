import itertools

import numpy as np
import pytest
from scipy import integrate, linalg, stats

from covnet.api.data_types import Hyperparams, MetricKind
from covnet.validation import ConstraintError
from covnet.workflows.graphs import markov_equivalent
from covnet.workflows.metrics import (
    FamilyScorer,
    ResidualTransform,
    ScoreCache,
    ScoredNetwork,
    bgecm_family_direct,
    build_bgecm_transform,
    build_residual_transform,
    covariate_precision_complement,
    dag_log_score,
    family_log_marginal,
    transform_dataset,
)
from covnet.workflows.model import CovariateMatrix, Dag, Dataset, MetricSpec
from covnet.workflows.search import enumerate_dags
from covnet.workflows.simgen import EXAMPLE2_Q


def random_instance(seed, n=12, p=3, m=2):
    """Random data and covariates with an intercept column."""
    rng = np.random.default_rng(seed)
    Q = np.column_stack([np.ones(n), rng.standard_normal((n, m - 1))])
    data = rng.standard_normal((n, p)) + Q @ rng.standard_normal((m, p))
    return Dataset(data), CovariateMatrix(Q)


def quadrature_log_marginal(y, S, shape, rate):
    """log of the integral of N(y; 0, psi S) InvGamma(psi; shape, rate) over psi."""
    zeros = np.zeros(y.size)

    def log_f(t):
        psi = np.exp(t)
        return (
            stats.multivariate_normal.logpdf(y, mean=zeros, cov=psi * S)
            + stats.invgamma.logpdf(psi, shape, scale=rate)
            + t
        )

    grid = np.linspace(-25, 25, 501)
    values = np.array([log_f(t) for t in grid])
    ref, peak = values.max(), grid[values.argmax()]
    val, _ = integrate.quad(
        lambda t: np.exp(log_f(t) - ref), -40, 40, points=[peak], limit=400,
        epsabs=0, epsrel=1e-10,
    )
    return ref + np.log(val)


_closed_form_cases = {
    "one_sample": {"y": [0.0], "X": None, "tau": 1.0, "delta": 1.0, "value": -np.log(np.pi)},
    "two_samples": {"y": [0.0, 0.0], "X": None, "tau": 1.0, "delta": 2.0, "value": -np.log(np.pi)},
    "one_parent": {
        "y": [1.0, -1.0],
        "X": [[1.0], [1.0]],
        "tau": 1.0,
        "delta": 2.0,
        "value": -np.log(18 * np.pi),
    },
}


@pytest.mark.parametrize("case", list(_closed_form_cases.keys()))
def test_family_log_marginal_closed_form(case):
    c = _closed_form_cases[case]
    X = None if c["X"] is None else np.array(c["X"])
    value = family_log_marginal(np.array(c["y"]), X, c["tau"], c["delta"])
    assert value == pytest.approx(c["value"], abs=1e-12)


_quadrature_cases = {
    "no_parents": {"k": 0, "n": 5, "tau": 1.0, "delta": 2.0},
    "one_parent": {"k": 1, "n": 6, "tau": 0.5, "delta": 3.0},
    "two_parents": {"k": 2, "n": 7, "tau": 2.0, "delta": 2.0},
}


@pytest.mark.parametrize("case", list(_quadrature_cases.keys()))
def test_family_log_marginal_matches_quadrature(case):
    c = _quadrature_cases[case]
    rng = np.random.default_rng(11)
    n, k = c["n"], c["k"]
    y = rng.standard_normal(n)
    X = rng.standard_normal((n, k))
    # the weights integrate out to N(0, psi (I + X X^T / tau))
    S = np.eye(n) + X @ X.T / c["tau"]
    expected = quadrature_log_marginal(y, S, 0.5 * (c["delta"] + k), 0.5 * c["tau"])
    value = family_log_marginal(y, X if k else None, c["tau"], c["delta"])
    assert value == pytest.approx(expected, rel=1e-7)


def test_family_log_marginal_rejects_bad_hyperparameters():
    with pytest.raises(ConstraintError):
        family_log_marginal(np.zeros(3), None, 0.0, 2.0)
    with pytest.raises(ConstraintError):
        family_log_marginal(np.zeros(3), None, 1.0, -1.0)
    with pytest.raises(ConstraintError):
        family_log_marginal(np.zeros(3), np.zeros((2, 1)), 1.0, 2.0)


def test_bgecm_cross_path():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 21))
        m = int(rng.integers(1, 4))
        k = int(rng.integers(0, min(4, n - 1)))
        upsilon = float(rng.choice([0.1, 1.0, 10.0]))
        hp = Hyperparams(tau=1.0, delta=2.0, upsilon=upsilon)
        Q = CovariateMatrix(rng.standard_normal((n, m)))
        y = rng.standard_normal(n)
        X = rng.standard_normal((n, k)) if k else None

        transform = build_bgecm_transform(Q, upsilon)
        T = transform.matrix
        transformed = family_log_marginal(
            T @ y, None if X is None else T @ X, hp.tau, hp.delta
        )
        direct = bgecm_family_direct(y, X, Q, hp)
        assert direct == pytest.approx(transformed + 0.5 * transform.log_det_J, rel=1e-8)


def test_bgecm_transform_factors_J():
    _, Q = random_instance(3, n=8, m=3)
    transform = build_bgecm_transform(Q, 2.0)
    J = covariate_precision_complement(Q.values, 2.0)
    np.testing.assert_allclose(transform.L @ transform.L.T, J, atol=1e-12)
    # J = (I + Q Q^T / upsilon)^{-1}
    np.testing.assert_allclose(
        np.linalg.inv(J), np.eye(8) + Q.values @ Q.values.T / 2.0, atol=1e-10
    )
    assert transform.log_det_J == pytest.approx(np.linalg.slogdet(J)[1], abs=1e-10)


_known_J_cases = {
    "unit_row": {"Q": [[1.0], [0.0]], "upsilon": 1.0, "J": np.diag([0.5, 1.0])},
    "large_upsilon": {"Q": EXAMPLE2_Q, "upsilon": 1e12, "J": np.eye(10)},
}


@pytest.mark.parametrize("case", list(_known_J_cases.keys()))
def test_bgecm_transform_known_J(case):
    c = _known_J_cases[case]
    transform = build_bgecm_transform(np.array(c["Q"]), c["upsilon"])
    np.testing.assert_allclose(transform.J, c["J"], rtol=0, atol=1e-10)
    np.testing.assert_allclose(transform.L @ transform.L.T, c["J"], rtol=0, atol=1e-10)


_eigen_cases = {
    "small_upsilon": {"upsilon": 0.01, "seed": 1},
    "unit_upsilon": {"upsilon": 1.0, "seed": 2},
    "large_upsilon": {"upsilon": 100.0, "seed": 3},
}


@pytest.mark.parametrize("case", list(_eigen_cases.keys()))
def test_bgecm_J_eigenvalues(case):
    c = _eigen_cases[case]
    upsilon = c["upsilon"]
    Q = np.random.default_rng(c["seed"]).standard_normal((10, 3))
    J = build_bgecm_transform(Q, upsilon).J
    assert np.abs(J - J.T).max() <= 1e-12

    eig = np.linalg.eigvalsh(J)
    s2 = linalg.svdvals(Q) ** 2
    assert eig.min() >= upsilon / (upsilon + s2.max()) - 1e-12
    assert eig.min() > 0
    assert eig.max() <= 1 + 1e-12
    # one eigenvalue upsilon / (upsilon + s^2) per covariate direction, 1 elsewhere
    expected = np.sort(np.r_[upsilon / (upsilon + s2), np.ones(7)])
    np.testing.assert_allclose(eig, expected, rtol=0, atol=1e-10)


_zero_data_cases = {
    "no_parents": {"X": None, "value": -np.log(np.pi) - 0.5 * np.log(2.0)},
    "one_parent": {"X": [[1.0], [2.0]], "value": np.log(1.5) - np.log(np.pi) - 0.5 * np.log(11.0)},
}


@pytest.mark.parametrize("case", list(_zero_data_cases.keys()))
def test_bgecm_family_direct_at_zero_data(case):
    # with y = 0 only the normalising constant of the t density remains
    c = _zero_data_cases[case]
    X = None if c["X"] is None else np.array(c["X"])
    Q = np.array([[1.0], [0.0]])
    value = bgecm_family_direct(np.zeros(2), X, Q, Hyperparams())
    assert value == pytest.approx(c["value"], abs=1e-12)

    transform = build_bgecm_transform(Q, 1.0)
    T = transform.matrix
    transformed = family_log_marginal(np.zeros(2), None if X is None else T @ X, 1.0, 2.0)
    assert value == pytest.approx(transformed + 0.5 * transform.log_det_J, abs=1e-12)


def test_residual_transform_projects_out_covariates():
    _, Q = random_instance(4, n=9, m=2)
    transform = build_residual_transform(Q)
    P = transform.P
    assert P.shape == (9, 7)
    np.testing.assert_allclose(P.T @ Q.values, 0.0, atol=1e-12)
    np.testing.assert_allclose(P.T @ P, np.eye(7), atol=1e-12)
    hat = Q.values @ np.linalg.solve(Q.values.T @ Q.values, Q.values.T)
    np.testing.assert_allclose(P @ P.T, np.eye(9) - hat, atol=1e-12)
    with pytest.raises(ConstraintError):
        ResidualTransform(2.0 * P)


def _total(values, dag, hp):
    total = 0.0
    for v in range(dag.p):
        pa = list(dag.parent_tuple(v))
        total += family_log_marginal(
            values[:, v], values[:, pa] if pa else None, hp.tau, hp.delta
        )
    return total


def test_residual_score_invariant_to_basis():
    hp = Hyperparams()
    dag = Dag(3, [(0, 1), (2, 1)])
    for seed in range(20):
        data, Q = random_instance(seed, n=10, m=2)
        P1 = build_residual_transform(Q)
        P2 = ResidualTransform(linalg.null_space(Q.values.T))
        rng = np.random.default_rng(100 + seed)
        R, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        P3 = P1.rotated(R)
        totals = [
            _total(transform_dataset(data, T.matrix).values, dag, hp)
            for T in (P1, P2, P3)
        ]
        assert totals[1] == pytest.approx(totals[0], abs=1e-8)
        assert totals[2] == pytest.approx(totals[0], abs=1e-8)


@pytest.mark.parametrize("kind", [k.value for k in MetricKind])
def test_score_equivalence(kind):
    dags = [Dag(3, edges) for edges in enumerate_dags(3)]
    for seed in range(20):
        data, Q = random_instance(seed, n=12, m=2)
        metric = MetricSpec(kind, None if kind == "bge" else Q)
        scorer = FamilyScorer(data, metric, Hyperparams())
        totals = [scorer.score(dag).total_log_score for dag in dags]
        for i, j in itertools.combinations(range(len(dags)), 2):
            if markov_equivalent(dags[i], dags[j]):
                assert abs(totals[i] - totals[j]) < 1e-9


def test_bgecm_tends_to_bge_for_large_upsilon():
    hp = Hyperparams(upsilon=1e10)
    for seed in range(20):
        data, Q = random_instance(seed, n=10, m=2)
        bgecm = FamilyScorer(data, MetricSpec("bgecm", Q), hp)
        bge = FamilyScorer(data, MetricSpec("bge", center=False), hp)
        for node in range(data.p):
            for pa in [(), tuple(u for u in range(data.p) if u != node)]:
                assert abs(bgecm.log_ml(node, pa) - bge.log_ml(node, pa)) < 1e-4


def test_dag_log_score_decomposes():
    data, Q = random_instance(7, n=15, p=4, m=2)
    dag = Dag(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    scored = dag_log_score(dag, data, MetricSpec("bgecm", Q))
    transform = build_bgecm_transform(Q, 1.0)
    expected = _total(transform_dataset(data, transform.matrix).values, dag, Hyperparams())
    assert scored.total_log_score == pytest.approx(expected, abs=1e-10)
    assert [f.parent_set for f in scored.family_scores] == [(), (0,), (0,), (1, 2)]


def test_cached_scores_are_bit_identical():
    data, Q = random_instance(8, n=10, p=4, m=2)
    cache = ScoreCache()
    scorer = FamilyScorer(data, MetricSpec("residual", Q), Hyperparams(), cache=cache)
    first = scorer.log_ml(3, (2, 0))
    assert (3, (0, 2)) in cache
    assert scorer.log_ml(3, (0, 2)) == first
    assert scorer.compute(3, (0, 2)) == first
    assert (cache.hits, cache.misses, len(cache)) == (1, 1, 1)


def test_parent_bound_against_effective_samples():
    data, Q = random_instance(9, n=5, p=6, m=2)
    scorer = FamilyScorer(data, MetricSpec("residual", Q), Hyperparams())
    assert scorer.n_effective == 3
    scorer.log_ml(0, (1, 2))
    with pytest.raises(ConstraintError):
        scorer.log_ml(0, (1, 2, 3))


def test_scored_network_checks_total():
    data, _ = random_instance(10)
    scored = dag_log_score(Dag(3, [(0, 1)]), data, MetricSpec("bge"))
    with pytest.raises(ValueError):
        ScoredNetwork(
            dag=scored.dag,
            family_scores=scored.family_scores,
            total_log_score=scored.total_log_score + 1.0,
        )
