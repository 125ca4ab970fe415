import numpy as np
import pytest

from deepir.backbone import LEVEL_CHANNELS, forward_between
from deepir.inversion import InversionConfig, invert
from deepir.tensors import FeatureMap


def feasible_case(bundle, level, seed, size=16, noise=0.1):
    rng = np.random.default_rng(seed)
    x0 = np.abs(rng.standard_normal((size, size, LEVEL_CHANNELS[level]))).astype(np.float32)
    x0_fm = FeatureMap(x0, layer=level)
    target = forward_between(x0_fm, bundle)
    init = FeatureMap(
        (x0 + noise * rng.standard_normal(x0.shape)).astype(np.float32), layer=level
    )
    return target, init


def test_initialized_at_minimizer(bundle):
    target, _ = feasible_case(bundle, 1, seed=0, noise=0.0)
    rng = np.random.default_rng(0)
    x0 = np.abs(rng.standard_normal((16, 16, 64))).astype(np.float32)
    x0_fm = FeatureMap(x0, layer=1)
    target = forward_between(x0_fm, bundle)
    out, trace = invert(target, bundle, x0_fm)
    assert trace[0] == 0.0
    assert len(trace) == 1
    assert np.array_equal(out.data, x0)


def test_feasible_target_converges(bundle):
    target, init = feasible_case(bundle, 1, seed=1)
    out, trace = invert(target, bundle, init, InversionConfig(max_iterations=200))
    assert trace[-1] <= 0.01 * trace[0]
    assert np.all(np.isfinite(out.data))


def test_trace_nonincreasing_infeasible(bundle):
    rng = np.random.default_rng(2)
    init = FeatureMap(
        np.abs(rng.standard_normal((12, 12, 64))).astype(np.float32), layer=1
    )
    target = FeatureMap(
        np.abs(rng.standard_normal((6, 6, 128))).astype(np.float32), layer=2
    )
    out, trace = invert(target, bundle, init, InversionConfig(max_iterations=60))
    diffs = np.diff(trace)
    assert np.all(diffs <= 0.0)
    assert trace[-1] <= 0.5 * trace[0]  # smoke bound frozen from the seed corpus


def test_gd_optimizer_also_descends(bundle):
    target, init = feasible_case(bundle, 1, seed=3)
    cfg = InversionConfig(max_iterations=40, optimizer="gd")
    out, trace = invert(target, bundle, init, cfg)
    assert np.all(np.diff(trace) <= 0.0)
    assert trace[-1] < trace[0]


def test_lbfgs_beats_gd_on_iteration_budget(bundle):
    target, init = feasible_case(bundle, 2, seed=4, size=12)
    budget = 25
    _, trace_l = invert(target, bundle, init, InversionConfig(max_iterations=budget))
    _, trace_g = invert(
        target, bundle, init, InversionConfig(max_iterations=budget, optimizer="gd")
    )
    assert trace_l[-1] <= trace_g[-1] * 1.05


def test_project_nonneg_keeps_features_nonnegative(bundle):
    target, init = feasible_case(bundle, 1, seed=5, size=12)
    cfg = InversionConfig(max_iterations=30, project_nonneg=True)
    out, trace = invert(target, bundle, init, cfg)
    assert out.data.min() >= 0.0
    assert np.all(np.diff(trace) <= 0.0)


def test_shape_mismatch_raises(bundle):
    rng = np.random.default_rng(6)
    init = FeatureMap(rng.standard_normal((12, 12, 64)).astype(np.float32), layer=1)
    target = FeatureMap(rng.standard_normal((5, 5, 128)).astype(np.float32), layer=2)
    with pytest.raises(ValueError, match="shape"):
        invert(target, bundle, init)


def test_config_validation():
    with pytest.raises(ValueError):
        InversionConfig(max_iterations=0)
    with pytest.raises(ValueError):
        InversionConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        InversionConfig(optimizer="adam")
