"""Penalties and the decoupled J-dimensional estimator."""

import numpy as np
import pytest

from replicacs.regularizers import (RegularizerSpec, _grid_argmin,
                                    channel_objective, penalty_block,
                                    prox_block, reg_value, scalar_estimate)


def _objective(spec, y, tau, v):
    return float(channel_objective(spec, np.reshape(y, (-1, 1)), tau,
                                   np.reshape(v, (-1, 1)))[0])


# ---------------------------------------------------------------------------
# Penalty values


def test_reg_value_examples():
    assert reg_value(RegularizerSpec("l1"), [1.0, -2.0]) == pytest.approx(3.0)
    assert reg_value(RegularizerSpec("group_l21"), [3.0, 4.0]) == pytest.approx(5.0)
    spec = RegularizerSpec("two_dim_lasso", phi=1.0, alpha=-1.0)
    assert reg_value(spec, [2.0, 2.0]) == pytest.approx(4.0)
    assert reg_value(RegularizerSpec("ridge", weight=2.0), [1.0, 1.0]) \
        == pytest.approx(2.0)
    assert reg_value(RegularizerSpec("zero"), [5.0, -5.0]) == 0.0


def test_group_equals_lpq21():
    rng = np.random.default_rng(0)
    lpq = RegularizerSpec("lpq", p=2.0, q=1.0, weight=0.8)
    grp = RegularizerSpec("group_l21", weight=0.8)
    for _ in range(20):
        v = rng.normal(size=3)
        assert reg_value(lpq, v) == pytest.approx(reg_value(grp, v), abs=1e-14)
    y = rng.normal(size=(2, 5))
    tau = rng.uniform(0.5, 1.5, 2)
    assert np.allclose(prox_block(y, tau, lpq), prox_block(y, tau, grp))


def test_lpq_single_index_formula():
    spec = RegularizerSpec("lpq", p=0.5, q=0.4)
    v = np.array([0.3, -1.2])
    expect = (abs(0.3) ** 0.5 + abs(1.2) ** 0.5) ** (0.4 / 0.5)
    assert reg_value(spec, v) == pytest.approx(expect)


def test_spec_validation():
    with pytest.raises(ValueError):
        RegularizerSpec("l1", weight=-1.0)
    with pytest.raises(ValueError):
        RegularizerSpec("lpq", p=0.0, q=1.0)
    with pytest.raises(ValueError):
        RegularizerSpec("two_dim_lasso", phi=-0.1, alpha=1.0)
    with pytest.raises(ValueError):
        RegularizerSpec("l1", box=0.0)


# ---------------------------------------------------------------------------
# Scalar estimates: closed-form examples


def test_soft_threshold_examples():
    spec = RegularizerSpec("l1", weight=0.5)
    assert scalar_estimate([2.0], [1.0], spec)[0] == pytest.approx(1.5)
    assert scalar_estimate([0.3], [1.0], spec)[0] == 0.0
    boxed = RegularizerSpec("l1", weight=0.5, box=1.0)
    assert scalar_estimate([3.0], [1.0], boxed)[0] == pytest.approx(1.0)


def test_group_block_shrinkage():
    spec = RegularizerSpec("group_l21")
    v = scalar_estimate([3.0, 4.0], [1.0, 1.0], spec)
    assert np.allclose(v, [2.4, 3.2])


def test_ridge_linear_shrinkage():
    spec = RegularizerSpec("ridge", weight=0.5)
    v = scalar_estimate([2.0], [1.0], spec)
    assert v[0] == pytest.approx(2.0 / 1.5)


def test_two_dim_phi_zero_equals_l1():
    rng = np.random.default_rng(1)
    td = RegularizerSpec("two_dim_lasso", weight=0.7, phi=0.0, alpha=-1.0)
    l1 = RegularizerSpec("l1", weight=0.7)
    for _ in range(50):
        y = rng.normal(0, 2, 2)
        tau = rng.uniform(0.3, 2.0, 2)
        assert np.allclose(scalar_estimate(y, tau, td),
                           scalar_estimate(y, tau, l1), atol=1e-14)


# ---------------------------------------------------------------------------
# Certification against the grid


@pytest.mark.parametrize("make_spec", [
    lambda r: RegularizerSpec("l1", weight=r.uniform(0.2, 1.5)),
    lambda r: RegularizerSpec("group_l21", weight=r.uniform(0.2, 1.5)),
    lambda r: RegularizerSpec("two_dim_lasso", weight=r.uniform(0.2, 1.5),
                              phi=r.choice([0.5, 1.0]),
                              alpha=r.choice([1.0, -1.0])),
    lambda r: RegularizerSpec("l1", weight=r.uniform(0.2, 1.5), box=1.0),
    lambda r: RegularizerSpec("two_dim_lasso", weight=r.uniform(0.2, 1.5),
                              phi=1.0, alpha=-1.0, box=1.0),
])
def test_closed_forms_match_grid(make_spec):
    rng = np.random.default_rng(11)
    for _ in range(12):
        spec = make_spec(rng)
        y = rng.normal(0, 2, 2)
        tau = rng.uniform(0.3, 2.0, 2)
        fast = scalar_estimate(y, tau, spec)
        grid = _grid_argmin(spec, y, tau)
        assert _objective(spec, y, tau, fast) \
            <= _objective(spec, y, tau, grid) + 1e-9


def test_nonconvex_lpq_grid_path():
    spec = RegularizerSpec("lpq", p=2.0, q=0.5, weight=0.6)
    rng = np.random.default_rng(12)
    for _ in range(4):
        y = rng.normal(0, 2, 2)
        tau = rng.uniform(0.5, 1.5, 2)
        v = scalar_estimate(y, tau, spec)
        # certified against its own grid: objective no worse than grid argmin
        grid = _grid_argmin(spec, y, tau)
        assert _objective(spec, y, tau, v) \
            <= _objective(spec, y, tau, grid) + 1e-12


def test_objective_optimality_random_probes():
    rng = np.random.default_rng(13)
    specs = [RegularizerSpec("l1", weight=0.8),
             RegularizerSpec("group_l21", weight=0.8),
             RegularizerSpec("two_dim_lasso", weight=0.8, phi=0.7, alpha=1.0),
             RegularizerSpec("ridge", weight=0.8),
             RegularizerSpec("l1", weight=0.8, box=1.5)]
    for spec in specs:
        y = rng.normal(0, 2, 2)
        tau = rng.uniform(0.3, 2.0, 2)
        xhat = scalar_estimate(y, tau, spec)
        base = _objective(spec, y, tau, xhat)
        probes = rng.uniform(-4, 4, size=(2, 1000))
        if spec.box is not None:
            probes = np.clip(probes, -spec.box, spec.box)
        objs = channel_objective(spec, y[:, None], tau, probes)
        assert base <= objs.min() + 1e-9


def test_prox_nonexpansive_convex():
    rng = np.random.default_rng(14)
    for spec in (RegularizerSpec("l1", weight=0.7),
                 RegularizerSpec("group_l21", weight=0.7),
                 RegularizerSpec("ridge", weight=0.7)):
        tau = rng.uniform(0.4, 1.6, 2)
        for _ in range(50):
            y1 = rng.normal(0, 2, 2)
            y2 = rng.normal(0, 2, 2)
            d_out = np.linalg.norm(scalar_estimate(y1, tau, spec)
                                   - scalar_estimate(y2, tau, spec))
            assert d_out <= np.linalg.norm(y1 - y2) + 1e-12


def test_threshold_scaling():
    w, t = 0.4, 1.7
    spec1 = RegularizerSpec("l1", weight=w)
    spec2 = RegularizerSpec("l1", weight=2 * w)
    # dead zone edge sits at weight * tau and doubles with the weight
    eps = 1e-9
    assert scalar_estimate([w * t - eps], [t], spec1)[0] == 0.0
    assert scalar_estimate([w * t + 1e-3], [t], spec1)[0] > 0.0
    assert scalar_estimate([2 * w * t - eps], [t], spec2)[0] == 0.0
    assert scalar_estimate([2 * w * t + 1e-3], [t], spec2)[0] > 0.0


# ---------------------------------------------------------------------------
# Block application


def test_prox_zero_is_identity():
    rng = np.random.default_rng(15)
    V = rng.normal(size=(2, 9))
    out = prox_block(V, [1.0, 1.0], RegularizerSpec("zero"))
    assert np.array_equal(out, V)


def test_prox_single_column_matches_scalar():
    spec = RegularizerSpec("two_dim_lasso", weight=0.9, phi=0.5, alpha=-1.0)
    y = np.array([1.3, -0.4])
    tau = np.array([0.8, 1.2])
    assert np.array_equal(prox_block(y[:, None], tau, spec)[:, 0],
                          scalar_estimate(y, tau, spec))


def test_prox_block_equals_column_loop():
    rng = np.random.default_rng(16)
    V = rng.normal(0, 2, size=(2, 16))
    tau = np.array([0.7, 1.1])
    spec = RegularizerSpec("l1", weight=0.6)
    out = prox_block(V, tau, spec)
    for n in range(16):
        assert np.allclose(out[:, n], scalar_estimate(V[:, n], tau, spec))


def test_penalty_block_columnwise():
    spec = RegularizerSpec("l1", weight=2.0)
    V = np.array([[1.0, -1.0], [0.5, 0.0]])
    assert np.allclose(penalty_block(spec, V), [3.0, 2.0])


def test_prox_rejects_bad_inputs():
    with pytest.raises(ValueError):
        prox_block(np.array([[np.inf]]), [1.0], RegularizerSpec("l1"))
    with pytest.raises(ValueError):
        prox_block(np.ones((2, 3)), [1.0, -1.0], RegularizerSpec("l1"))
