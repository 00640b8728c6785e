import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablab.errors import (
    BlowUpError,
    InputError,
    MonomialOverflowError,
    ParameterError,
    UnsupportedOperationError,
    WrongRegimeError,
)
from stablab.lyapunov import v1
from stablab.model import (
    LyapunovValue,
    ModelParams,
    State,
    blowup_time,
    deterministic_solution_equal,
    deterministic_solution_unequal,
    drift_fields,
    generator_apply,
    generator_fd,
    hamiltonian,
    ipow,
)
from stablab.sde import ode_reference


@pytest.fixture
def cfg_a():
    return ModelParams.from_profile(2, 3, 2, 1, 1)


def test_drift_at_unit_point(cfg_a):
    f = drift_fields(cfg_a, State(1, 1))
    assert (f.w, f.u, f.fx, f.fy) == (1, 1, 0, -4)


def test_drift_vanishes_on_axis(cfg_a):
    f = drift_fields(cfg_a, (0.0, 7.0))
    assert f.w == 0 and f.u == 0 and f.fx == 0 and f.fy == 0


def test_drift_large_point(cfg_a):
    f = drift_fields(cfg_a, (10.0, 10.0))
    assert f.w == 1000 and f.u == 1000
    assert f.fx == pytest.approx(-2.997e7, rel=1e-15)


def test_drift_overflow_is_typed(cfg_a):
    with pytest.raises(MonomialOverflowError) as exc:
        drift_fields(cfg_a, (1e120, 1e120))
    assert exc.value.x == 1e120


def test_ipow_matches_power_with_sign():
    x = np.array([-3.0, -0.5, 0.0, 2.0])
    for k in range(0, 10):
        np.testing.assert_allclose(ipow(x, k), x ** k, rtol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6),
       st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False))
def test_w_parity(m, n, x, y):
    p = ModelParams.from_profile(m, n, 2, 1, 1)
    w = drift_fields(p, (x, y)).w
    assert drift_fields(p, (-x, y)).w == pytest.approx((-1) ** (m - 1) * w, rel=1e-12, abs=1e-300)
    assert drift_fields(p, (x, -y)).w == pytest.approx((-1) ** (n - 1) * w, rel=1e-12, abs=1e-300)


def test_generator_examples(cfg_a):
    assert generator_apply(cfg_a, v1((0.0, 0.0)), (0.0, 0.0)) == 2.0
    assert generator_apply(cfg_a, v1((10.0, 10.0)), (10.0, 10.0)) == -999_799_998
    zero = LyapunovValue(*(np.zeros(()) for _ in range(5)))
    assert generator_apply(cfg_a, zero._replace(value=np.array(3.0)), (2.0, -1.0)) == 0


def test_generator_rejects_nonfinite_partials(cfg_a):
    bad = LyapunovValue(1.0, math.nan, 0.0, 0.0, 0.0)
    with pytest.raises(InputError):
        generator_apply(cfg_a, bad, (1.0, 1.0))


def test_hamiltonian():
    p = ModelParams.from_profile(2, 3, 2, 1, 1)
    assert hamiltonian(p, (2.0, 1.0)) == 4
    assert hamiltonian(p, (0.0, 5.0)) == 0
    wob = ModelParams.from_profile(2, 2, 2, 1, 1, "wobble")
    assert hamiltonian(wob, (1.0, 1.0)) == pytest.approx(1.42074, abs=1e-5)
    no_h = ModelParams(2, 3, 2.0, 1.0, 1.0, h_prime=lambda t: np.ones_like(t), a=1.0)
    with pytest.raises(UnsupportedOperationError):
        hamiltonian(no_h, (1.0, 1.0))


@pytest.mark.parametrize("kw", [dict(m=1), dict(n=2.5), dict(q=1.0), dict(eps_x=0.0), dict(eps_y=-1.0)])
def test_params_validation(kw):
    base = dict(m=2, n=3, q=2.0, eps_x=1.0, eps_y=1.0, h_prime=lambda t: 1.0, a=1.0)
    base.update(kw)
    with pytest.raises(ParameterError):
        ModelParams(**base)


def test_degenerate_noise_opt_in():
    p = ModelParams.from_profile(2, 2, 2, 0, 0, degenerate_noise=True)
    assert p.eps_x == 0


def test_state_must_be_finite():
    with pytest.raises(InputError):
        State(math.inf, 0.0)


def test_profile_checks():
    for name in ("identity", "negated", "wobble"):
        p = ModelParams.from_profile(2, 3, 2, 1, 1, name)
        assert p.check_profile() < 1e-7
    with pytest.raises(ParameterError):
        ModelParams.from_profile(2, 3, 2, 1, 1, "wobble").replace(a=0.9).check_profile()


def test_equal_closed_form():
    p = ModelParams.from_profile(2, 2, 2, 1, 1)
    s = deterministic_solution_equal(p, (1.0, 1.0), 1.0)
    assert s.x == pytest.approx(math.e ** 2, rel=1e-15)
    assert s.y == pytest.approx(math.e ** -2, rel=1e-15)
    assert tuple(deterministic_solution_equal(p, (0.3, -2.0), 0.0)) == (0.3, -2.0)
    for t in np.linspace(-2, 2, 9):
        s = deterministic_solution_equal(p, (1.0, 1.0), t)
        assert s.x * s.y == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(WrongRegimeError):
        deterministic_solution_unequal(p, (1.0, 1.0), 0.1)


def test_unequal_closed_form():
    p = ModelParams.from_profile(3, 2, 2, 1, 1)
    s = deterministic_solution_unequal(p, (1.0, 1.0), 0.5)
    assert s.x == pytest.approx(4.0, rel=1e-15) and s.y == pytest.approx(0.125, rel=1e-15)
    assert tuple(deterministic_solution_unequal(p, (0.0, 3.0), 7.0)) == (0.0, 3.0)
    with pytest.raises(BlowUpError) as exc:
        deterministic_solution_unequal(p, (1.0, 1.0), 1.0)
    assert exc.value.t_star == 1.0
    with pytest.raises(WrongRegimeError):
        deterministic_solution_equal(p, (1.0, 1.0), 0.1)


def test_blowup_time():
    assert blowup_time(ModelParams.from_profile(3, 2, 2, 1, 1), (1.0, 1.0)) == 1.0
    assert blowup_time(ModelParams.from_profile(2, 3, 2, 1, 1), (1.0, 1.0)) is None
    assert blowup_time(ModelParams.from_profile(3, 2, 2, 1, 1), (0.0, 4.0)) is None
    with pytest.raises(WrongRegimeError):
        blowup_time(ModelParams.from_profile(2, 2, 2, 1, 1), (1.0, 1.0))


@pytest.mark.parametrize("m,n,s0", [(2, 2, (1.0, 1.0)), (3, 3, (0.7, -1.1)), (3, 2, (1.0, 1.0)),
                                    (2, 3, (0.5, 0.8)), (4, 2, (-0.9, 1.2))])
def test_hamiltonian_conserved_along_closed_forms(m, n, s0):
    p = ModelParams.from_profile(m, n, 2, 1, 1)
    H0 = hamiltonian(p, s0)
    ts = np.linspace(0, 1.0, 11)
    if m != n:
        t_star = blowup_time(p, s0)
        if t_star is not None:
            ts = np.linspace(0, 0.99 * t_star, 11)
    for t in ts:
        s = deterministic_solution_equal(p, s0, t) if m == n else deterministic_solution_unequal(p, s0, t)
        assert hamiltonian(p, s) == pytest.approx(H0, rel=1e-10)


@pytest.mark.parametrize("m,n,s0", [(3, 3, (0.8, 1.1)), (2, 3, (0.5, 0.8)), (4, 2, (-0.9, 1.2))])
def test_closed_forms_against_ode(m, n, s0):
    p = ModelParams.from_profile(m, n, 2, 1, 1, pure_hamiltonian=True)
    if m == n:
        t_end, sol = 5.0, deterministic_solution_equal
    else:
        t_star = blowup_time(p, s0)
        t_end, sol = (0.99 * t_star if t_star else 5.0), deterministic_solution_unequal
    ts = np.linspace(0, t_end, 21)
    tr = ode_reference(p, s0, t_end, t_eval=ts)
    for t, st_ in zip(ts, tr.states):
        ref = sol(p, s0, t)
        np.testing.assert_allclose(st_, tuple(ref), rtol=1e-6)


def test_finite_difference_generator_is_second_order(cfg_a):
    f = lambda x, y: np.exp(np.sin(x) + np.cos(2 * y))

    def jet(x, y):
        e = f(x, y)
        return LyapunovValue(e, np.cos(x) * e, -2 * np.sin(2 * y) * e,
                             (np.cos(x) ** 2 - np.sin(x)) * e,
                             (4 * np.sin(2 * y) ** 2 - 4 * np.cos(2 * y)) * e)

    rng = np.random.default_rng(0)
    s = (rng.uniform(-1.5, 1.5, 200), rng.uniform(-1.5, 1.5, 200))
    exact = generator_apply(cfg_a, jet(*s), s)
    errs = [np.max(np.abs(generator_fd(cfg_a, f, s, h) - exact)) for h in (1e-2, 1e-3)]
    assert math.log10(errs[0] / errs[1]) >= 1.9
