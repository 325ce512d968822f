import numpy as np
import pytest
from scipy import stats

from covnet.api.data_types import Hyperparams
from covnet.validation import ConstraintError
from covnet.workflows.metrics import dag_log_score
from covnet.workflows.model import CovariateMatrix, Dag, MetricSpec
from covnet.workflows.simgen import (
    EXAMPLE2_Q,
    gen_example1,
    gen_example2,
    gen_generic,
)

_Q_EXAMPLE2 = [
    [-1.32, 0.83, -1.74],
    [0.22, -1.37, 0.55],
    [0.37, 0.61, 0.60],
    [-1.53, 1.52, 0.82],
    [-0.73, -0.01, 0.93],
    [0.92, 0.87, -0.09],
    [1.02, -0.44, -0.04],
    [0.27, -0.59, 0.11],
    [-0.64, 0.20, -0.21],
    [-0.15, 0.48, -0.12],
]

_shape_cases = {
    "example1": {"gen": gen_example1, "n": 100, "p": 100, "m": 2, "edges": 0},
    "example2": {"gen": gen_example2, "n": 10, "p": 20, "m": 3, "edges": 3},
}


@pytest.mark.parametrize("case", list(_shape_cases.keys()))
def test_example_shapes(case):
    c = _shape_cases[case]
    outputs = c["gen"](seed=3, replicates=4)
    assert len(outputs) == 4
    for r, out in enumerate(outputs):
        assert out.replicate == r
        assert (out.data.n, out.data.p) == (c["n"], c["p"])
        assert (out.covariates.n, out.covariates.m) == (c["n"], c["m"])
        assert out.truth.n_edges == c["edges"]
        assert out.true_params.b.shape == (c["p"], c["m"])
        assert all(
            g.size == len(out.truth.parent_tuple(i))
            for i, g in enumerate(out.true_params.gamma)
        )


@pytest.mark.parametrize("case", list(_shape_cases.keys()))
def test_examples_are_deterministic(case):
    gen = _shape_cases[case]["gen"]
    a, b = gen(seed=11, replicates=3), gen(seed=11, replicates=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.data.values, y.data.values)
        assert np.array_equal(x.true_params.psi, y.true_params.psi)
    other = gen(seed=12, replicates=1)
    assert not np.array_equal(a[0].data.values, other[0].data.values)


@pytest.mark.parametrize("case", list(_shape_cases.keys()))
def test_parameters_fixed_across_replicates(case):
    outputs = _shape_cases[case]["gen"](seed=5, replicates=5)
    first = outputs[0].true_params
    for out in outputs[1:]:
        assert np.array_equal(out.true_params.psi, first.psi)
        assert np.array_equal(out.true_params.b, first.b)
        assert all(np.array_equal(g, h) for g, h in zip(out.true_params.gamma, first.gamma))
        assert not np.array_equal(out.data.values, outputs[0].data.values)


def test_adding_replicates_keeps_existing_draws():
    short = gen_example2(seed=4, replicates=2)
    long = gen_example2(seed=4, replicates=5)
    for a, b in zip(short, long):
        assert np.array_equal(a.data.values, b.data.values)


def test_example1_groups():
    out = gen_example1(seed=0, replicates=1)[0]
    Q = out.covariates.values
    np.testing.assert_array_equal(Q.sum(axis=1), 1.0)
    assert Q[:50, 0].sum() == 50 and Q[50:, 1].sum() == 50
    assert out.covariates.names == ["group1", "group2"]


def test_example1_within_group_variance():
    outputs = gen_example1(seed=2, replicates=10)
    psi = outputs[0].true_params.psi
    groups = [slice(0, 50), slice(50, 100)]
    pooled = np.zeros(100)
    for out in outputs:
        for g in groups:
            block = out.data.values[g]
            pooled += ((block - block.mean(axis=0)) ** 2).sum(axis=0)
    df = 10 * 2 * 49
    pooled /= df
    se = psi * np.sqrt(2.0 / df)
    within = np.abs(pooled - psi) < 3 * se
    assert within.mean() >= 0.95


def test_example2_covariates_exact():
    np.testing.assert_array_equal(EXAMPLE2_Q, np.array(_Q_EXAMPLE2))
    out = gen_example2(seed=0, replicates=1)[0]
    np.testing.assert_array_equal(out.covariates.values, np.array(_Q_EXAMPLE2))
    assert out.truth.edges == frozenset({(0, 18), (1, 18), (18, 19)})


def test_example2_regression_recovers_weight():
    outputs = gen_example2(seed=1, replicates=10)
    params = outputs[0].true_params
    estimates, variances = [], []
    for out in outputs:
        Z = np.column_stack([out.data.values[:, 18], out.covariates.values])
        coef, *_ = np.linalg.lstsq(Z, out.data.values[:, 19], rcond=None)
        estimates.append(coef[0])
        variances.append(params.psi[19] * np.linalg.inv(Z.T @ Z)[0, 0])
    se = np.sqrt(np.sum(variances)) / len(outputs)
    assert abs(np.mean(estimates) - params.gamma[19][0]) < 3 * se


def test_gen_generic_without_covariate_effects():
    n = 2000
    Q = CovariateMatrix(np.ones((n, 1)))
    out = gen_generic(Dag(3), Q, Hyperparams(upsilon=1e12), n=n, seed=6)
    assert np.all(np.abs(out.true_params.b) < 1e-4)
    for i in range(3):
        z = out.data.values[:, i] / np.sqrt(out.true_params.psi[i])
        assert stats.kstest(z, "norm").pvalue > 1e-3


def test_gen_generic_chain_is_correlated():
    n = 5000
    Q = CovariateMatrix(np.ones((n, 1)))
    significant = 0
    seeds = range(40)
    for seed in seeds:
        out = gen_generic(Dag(2, [(0, 1)]), Q, seed=seed)
        _, pvalue = stats.pearsonr(out.data.values[:, 0], out.data.values[:, 1])
        significant += pvalue < 0.01
    assert significant >= 0.85 * len(seeds)


def test_gen_generic_truth_beats_empty_graph():
    n, p = 100, 5
    truth = Dag(p, [(0, 1), (1, 2), (3, 4)])
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        Q = CovariateMatrix(np.column_stack([np.ones(n), rng.standard_normal(n)]))
        out = gen_generic(truth, Q, n=n, seed=seed)
        metric = MetricSpec("bgecm", Q)
        wins += (
            dag_log_score(truth, out.data, metric).total_log_score
            > dag_log_score(Dag(p), out.data, metric).total_log_score
        )
    assert wins > 10


def test_gen_generic_checks_sample_count():
    Q = CovariateMatrix(np.ones((5, 1)))
    with pytest.raises(ConstraintError):
        gen_generic(Dag(2), Q, n=6)
