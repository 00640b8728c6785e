import itertools
import json
import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from stablab.ergodicity import (
    DictionaryEntry,
    MixingReport,
    StabilityReport,
    TestFunctionDictionary,
    empirical_wasserstein1,
    fit_exponential,
    mixing_experiment,
    return_time_stats,
    stability_check,
    wv_lower_bound,
)
from stablab.errors import FitUnavailableError, InputError
from stablab.lyapunov import derive_constants
from stablab.model import ModelParams
from stablab.sde import Ensemble, IntegratorConfig, Trajectory


@pytest.fixture(scope="module")
def cfg_a():
    p = ModelParams.from_profile(2, 3, 2, 1, 1)
    return p, derive_constants(p)


def _lsa_w1(a, b):
    M = cdist(a, b)
    r, c = linear_sum_assignment(M)
    return M[r, c].mean()


def _brute_w1(a, b):
    M = cdist(a, b)
    n = len(a)
    return min(M[np.arange(n), list(p)].mean() for p in itertools.permutations(range(n)))


def test_w1_examples():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(500, 2))
    assert empirical_wasserstein1(a, a) == 0
    assert empirical_wasserstein1(np.zeros((20, 2)), np.tile([3.0, 4.0], (20, 1))) == pytest.approx(5.0, rel=1e-14)
    shifted = a + [1.0, 0.0]
    assert empirical_wasserstein1(a, shifted) == pytest.approx(1.0, abs=1e-9)


def test_w1_errors():
    with pytest.raises(InputError):
        empirical_wasserstein1(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(InputError):
        empirical_wasserstein1(np.zeros((3, 2)), np.zeros((4, 2)))


@pytest.mark.parametrize("n", [2, 5, 7])
def test_w1_matches_brute_force(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        a, b = rng.normal(size=(n, 2)), rng.normal(size=(n, 2)) * 2
        assert empirical_wasserstein1(a, b) == pytest.approx(_brute_w1(a, b), rel=1e-12)


def test_w1_matches_scipy_assignment():
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=(300, 2)), rng.standard_cauchy(size=(300, 2))
    assert empirical_wasserstein1(a, b) == pytest.approx(_lsa_w1(a, b), rel=1e-12)


def test_w1_is_a_metric():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a, b, c = (rng.normal(size=(6, 2)) * rng.uniform(0.1, 3) for _ in range(3))
        ab, bc, ac = (empirical_wasserstein1(*pair) for pair in ((a, b), (b, c), (a, c)))
        assert ab == empirical_wasserstein1(b, a)
        assert ac <= ab + bc + 1e-12


def test_w1_subsamples_large_clouds():
    a = np.zeros((5000, 2))
    b = np.ones((5000, 2))
    assert empirical_wasserstein1(a, b) == pytest.approx(math.sqrt(2))


def test_dictionary_certification(cfg_a):
    p, k = cfg_a
    d = TestFunctionDictionary.default(p, k).certify((-20, 20, -20, 20), probes=20_000)
    assert d.certified and len(d.entries) == 26
    assert all(r["worst_ratio"] <= 1 for r in d.records())
    bad = TestFunctionDictionary(p, k, [DictionaryEntry("huge", lambda x, y: 1e9 + 0 * x)])
    bad.certify((-1, 1, -1, 1), probes=1000)
    assert not bad.entries and bad.rejected[0].name == "huge"


def test_wv_lower_bound_examples(cfg_a):
    p, k = cfg_a
    ramp = TestFunctionDictionary(p, k, [DictionaryEntry("min(1,x)", lambda x, y: np.minimum(1.0, x))])
    ramp.certify((-10, 10, -10, 10), probes=10_000)
    A = np.zeros((10, 2))
    B = np.tile([3.0, 4.0], (10, 1))
    assert wv_lower_bound(A, B, ramp) == 1.0
    assert wv_lower_bound(A, A, ramp) == 0.0


def test_dual_never_exceeds_primal(cfg_a):
    p, k = cfg_a
    d = TestFunctionDictionary.default(p, k).certify((-10, 10, -10, 10), probes=10_000)
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(200, 2)), rng.normal(size=(200, 2)) + [1.5, -0.5]
    V_max = 1.0 + max(np.max(np.sum(a ** 2, 1)), np.max(np.sum(b ** 2, 1))) * 10
    assert wv_lower_bound(a, b, d) <= 1 + 2 * V_max
    for e in d.entries:
        fa, fb = e.fn(a[:, 0], a[:, 1]), e.fn(b[:, 0], b[:, 1])
        single = TestFunctionDictionary(p, k, [e])
        M = np.abs(fa[:, None] - fb[None, :])
        r, c = linear_sum_assignment(M)
        assert wv_lower_bound(a, b, single) <= M[r, c].mean() + 1e-12


def test_fitter_exact():
    t = np.linspace(0.5, 8, 16)
    fit = fit_exponential(t, 2 * np.exp(-0.7 * t))
    assert fit.C == pytest.approx(2.0, rel=1e-12)
    assert fit.c == pytest.approx(0.7, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fitter_needs_three_points():
    with pytest.raises(FitUnavailableError) as exc:
        fit_exponential([1, 2, 3], [1.0, 0.5, 0.0])
    assert exc.value.distances == [1.0, 0.5, 0.0]
    with pytest.raises(FitUnavailableError):
        fit_exponential([1, 2, 3, 4], [1.0, 0.5, 0.2, 0.1], floor=0.3)


def test_mixing_equal_starts_is_unfittable(cfg_a):
    p, k = cfg_a
    with pytest.raises(FitUnavailableError) as exc:
        mixing_experiment(p, k, (1.0, 1.0), (1.0, 1.0), 64, [0.1, 0.2, 0.3], seed=5, dt=0.01,
                          coupling="synchronous", probes=1000)
    assert exc.value.distances == [0.0, 0.0, 0.0]


def test_mixing_report_small_run(cfg_a):
    p, k = cfg_a
    rep = mixing_experiment(p, k, (5.0, 5.0), (-5.0, -5.0), 256, [0.1, 0.2, 0.3, 0.4], seed=1,
                            dt=0.01, probes=2000)
    assert len(rep.w1) == 4 and all(v >= 0 for v in rep.w1 + rep.wv_lb)
    assert math.isfinite(rep.fitted_c)
    doc = json.loads(rep.to_json())
    assert doc["times"] == [0.1, 0.2, 0.3, 0.4]
    assert rep.to_csv().splitlines()[0] == "t,w1,wv_lb"


def test_report_invariants():
    with pytest.raises(InputError):
        MixingReport((1.0, 0.5), (1.0, 1.0), (0.0, 0.0), 1.0, 1.0, 1.0)
    with pytest.raises(InputError):
        StabilityReport(1.0, 0.0, (1.5,))


def test_stability_extremes(cfg_a):
    p, _ = cfg_a
    cfg = IntegratorConfig(dt=0.01, steps=50, seed=2)
    rep = stability_check(p, cfg, (0.0, 0.0), 200, 1e308, [0.25, 0.5])
    assert rep.empirical_tail == (0.0, 0.0)
    rep = stability_check(p, cfg, (0.0, 0.0), 200, 1e-300, [0.25, 0.5])
    assert rep.empirical_tail == (1.0, 1.0)


def test_return_times():
    t = np.arange(15) * 0.1
    inside = Trajectory(t, np.zeros((15, 2)))
    assert return_time_stats(inside, 1.0).empty
    # alternate 3 steps inside, 3 steps outside
    r = np.where((np.arange(15) // 3) % 2 == 1, 5.0, 0.0)
    alt = Trajectory(t, np.column_stack([r, np.zeros(15)]))
    s = return_time_stats(alt, 1.0)
    assert s.durations == pytest.approx((0.3, 0.3)) and s.censored == 0
    s2 = return_time_stats(Trajectory(t[:10], alt.states[:10]), 1.0)
    assert s2.durations == pytest.approx((0.3,)) and s2.censored == 1
