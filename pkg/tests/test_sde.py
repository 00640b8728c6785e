import io
import math

import numpy as np
import pytest
from scipy import stats

from stablab.errors import BlowUpError, InputError, ParameterError
from stablab.lyapunov import v1
from stablab.model import ModelParams, State, deterministic_solution_equal, deterministic_solution_unequal, drift_fields
from stablab.sde import (
    _tamed_increment,
    IntegratorConfig,
    NoiseStream,
    dynkin_one_step,
    normal_draws,
    ode_reference,
    read_binary,
    read_csv,
    simulate_ensemble,
    simulate_path,
    step_tamed,
)


@pytest.fixture
def cfg_a():
    return ModelParams.from_profile(2, 3, 2, 1, 1)


def test_step_tamed_example(cfg_a):
    s = step_tamed(cfg_a, State(1, 1), 0.01, (0.0, 0.0))
    assert s.x == 1.0
    assert s.y == pytest.approx(1 + 0.01 * -4 / (1 + 0.01 * 4), rel=1e-15)
    assert s.y == pytest.approx(0.9615384615384616, rel=1e-15)


def test_step_tamed_zero_drift_is_pure_noise(cfg_a):
    s = step_tamed(cfg_a, (0.0, 3.0), 0.04, (0.5, -1.0))
    assert s == State(0.0 + 0.2 * 0.5, 3.0 - 0.2)


def test_taming_vanishes_as_dt_shrinks(cfg_a):
    f = drift_fields(cfg_a, (1.3, -0.4))
    for dt in (1e-4, 1e-6, 1e-8):
        s = step_tamed(cfg_a, (1.3, -0.4), dt, (0.0, 0.0))
        assert (s.x - 1.3) / dt == pytest.approx(float(f.fx), rel=10 * dt * math.hypot(f.fx, f.fy))


def test_step_tamed_rejects_bad_noise(cfg_a):
    with pytest.raises(InputError):
        step_tamed(cfg_a, (0.0, 0.0), 0.01, (math.nan, 0.0))
    with pytest.raises(ParameterError):
        step_tamed(cfg_a, (0.0, 0.0), 0.0, (0.0, 0.0))


def test_taming_survives_overflowing_drift(cfg_a):
    s = step_tamed(cfg_a, (1e200, 1e200), 1e-3, (0.0, 0.0))
    assert math.isfinite(s.x) and math.isfinite(s.y)
    # the increment is the limiting unit direction -(n x, m y) / |(n x, m y)|
    dx, dy = _tamed_increment(cfg_a, np.array([1e60, -1e60]), np.array([1e60, 1e60]), 1e-3)
    assert dx[0] == pytest.approx(-3 / math.hypot(3, 2)) and dy[0] == pytest.approx(-2 / math.hypot(3, 2))
    assert np.hypot(dx, dy) == pytest.approx([1.0, 1.0])


def test_noise_stream_is_counter_based():
    whole = normal_draws(7, 3, 600)
    stream = NoiseStream(7, [3])
    parts = np.concatenate([stream.next_block(100)[:, :, 0], stream.next_block(500)[:, :, 0]])
    np.testing.assert_array_equal(whole, parts)
    # paths do not interfere
    both = NoiseStream(7, [5, 3]).next_block(600)
    np.testing.assert_array_equal(both[:, :, 1], whole)
    assert not np.array_equal(normal_draws(8, 3, 600), whole)


def test_noise_is_standard_normal():
    z = NoiseStream(0, range(50)).next_block(2000).ravel()
    assert abs(z.mean()) < 5 / math.sqrt(z.size)
    assert abs(z.std() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_config_validation():
    with pytest.raises(ParameterError):
        IntegratorConfig(steps=0)
    with pytest.raises(ParameterError):
        IntegratorConfig(dt=-1.0)
    with pytest.raises(ParameterError):
        IntegratorConfig(scheme="milstein")
    with pytest.raises(ParameterError):
        IntegratorConfig(seed=-1)
    assert IntegratorConfig(dt=0.01, steps=300).horizon == pytest.approx(3.0)


def test_single_step_path(cfg_a):
    tr = simulate_path(cfg_a, IntegratorConfig(dt=0.01, steps=1, seed=4), (1.0, 1.0))
    assert tr.times.tolist() == [0.0, 0.01]
    xi = normal_draws(4, 0, 1)[0]
    assert tuple(tr.final()) == tuple(step_tamed(cfg_a, (1.0, 1.0), 0.01, xi))


def test_thinning_keeps_last_state(cfg_a):
    full = simulate_path(cfg_a, IntegratorConfig(dt=0.01, steps=25, seed=1), (0.0, 0.0))
    thin = simulate_path(cfg_a, IntegratorConfig(dt=0.01, steps=25, seed=1, thin=10), (0.0, 0.0))
    assert thin.times.tolist() == pytest.approx([0.0, 0.1, 0.2, 0.25])
    np.testing.assert_array_equal(thin.states, full.states[[0, 10, 20, 25]])


def test_zero_noise_path_converges_to_closed_form():
    p = ModelParams.from_profile(2, 2, 2, 0, 0, pure_hamiltonian=True, degenerate_noise=True)
    exact = np.array(tuple(deterministic_solution_equal(p, (1.0, 1.0), 1.0)))
    errs = []
    for dt in (1e-3, 1e-4):
        tr = simulate_path(p, IntegratorConfig(dt=dt, steps=round(1 / dt)), (1.0, 1.0))
        errs.append(np.max(np.abs(tr.states[-1] - exact)))
    assert errs[1] < errs[0] / 5  # first order: a tenfold dt cut removes most of the error
    assert errs[1] < 0.05


def test_euler_flags_blowup(cfg_a):
    tr = simulate_path(cfg_a, IntegratorConfig("euler", 1e-2, 10_000, 0), (50.0, 50.0))
    assert tr.blowup_flag
    assert np.all(np.isfinite(tr.states)) and tr.times.size < 10_001


def test_ensemble_thread_independence(cfg_a):
    cfg = IntegratorConfig(dt=1e-2, steps=200, seed=9)
    one = simulate_ensemble(cfg_a, cfg, (0.5, -0.5), 2500, [1.0, 2.0], threads=1)
    three = simulate_ensemble(cfg_a, cfg, (0.5, -0.5), 2500, [1.0, 2.0], threads=3)
    again = simulate_ensemble(cfg_a, cfg, (0.5, -0.5), 2500, [1.0, 2.0], threads=1)
    for a, b, c in zip(one, three, again):
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.states, c.states)


def test_ensemble_of_one_matches_path(cfg_a):
    cfg = IntegratorConfig(dt=1e-2, steps=100, seed=2)
    ens = simulate_ensemble(cfg_a, cfg, (1.0, 1.0), 1, [0.5, 1.0])
    tr = simulate_path(cfg_a, cfg, (1.0, 1.0))
    np.testing.assert_array_equal(ens[0].states[0], tr.states[50])
    np.testing.assert_array_equal(ens[1].states[0], tr.states[100])


def test_ensemble_checkpoints_on_grid(cfg_a):
    cfg = IntegratorConfig(dt=0.1, steps=10)
    with pytest.raises(ParameterError):
        simulate_ensemble(cfg_a, cfg, (0.0, 0.0), 3, [0.25])
    with pytest.raises(ParameterError):
        simulate_ensemble(cfg_a, cfg, (0.0, 0.0), 3, [0.5, 0.2])
    with pytest.raises(ParameterError):
        simulate_ensemble(cfg_a, cfg, (0.0, 0.0), 0)


def test_ensemble_from_many_initial_points(cfg_a):
    init = np.array([[0.0, 0.0], [1.0, 1.0], [-2.0, 3.0]])
    ens = simulate_ensemble(cfg_a, IntegratorConfig(dt=0.1, steps=3), init, 3, [0.0, 0.3])
    np.testing.assert_array_equal(ens[0].states, init)


def test_serialization_roundtrip(cfg_a, tmp_path):
    tr = simulate_path(cfg_a, IntegratorConfig(dt=0.01, steps=50, seed=3), (0.2, 0.1))
    tr.to_binary(tmp_path / "t.bin")
    back = read_binary(tmp_path / "t.bin")
    np.testing.assert_array_equal(back.states, tr.states)
    assert back.params_digest == cfg_a.digest()
    buf = io.StringIO()
    tr.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "path_id,t,x,y"
    ids, t, states = read_csv(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(states, tr.states)  # %.17g round-trips exactly
    ens = simulate_ensemble(cfg_a, IntegratorConfig(dt=0.01, steps=10), (0.0, 0.0), 7)[0]
    ens.to_binary(tmp_path / "e.bin")
    eb = read_binary(tmp_path / "e.bin")
    np.testing.assert_array_equal(eb.states, ens.states)
    assert eb.t == ens.t
    with open(tmp_path / "e.bin", "rb") as fh:
        assert fh.read(8) == b"STABLAB\x01"


def test_ode_reference_examples():
    p = ModelParams.from_profile(2, 2, 2, 1, 1)
    tr = ode_reference(p, (1.0, 1.0), 1.0, pure_hamiltonian=True)
    assert tr.final().x == pytest.approx(math.e ** 2, abs=1e-8)
    assert tr.final().y == pytest.approx(math.e ** -2, abs=1e-8)
    p32 = ModelParams.from_profile(3, 2, 2, 1, 1)
    tr = ode_reference(p32, (1.0, 1.0), 0.9, pure_hamiltonian=True)
    ref = deterministic_solution_unequal(p32, (1.0, 1.0), 0.9)
    assert tr.final().x == pytest.approx(ref.x, rel=1e-7)
    assert tr.final().y == pytest.approx(ref.y, rel=1e-7)
    tr = ode_reference(p, (0.4, 0.3), 0.0)
    assert tr.states.tolist() == [[0.4, 0.3]]


def test_ode_reference_detects_blowup():
    p = ModelParams.from_profile(3, 2, 2, 1, 1, pure_hamiltonian=True)
    with pytest.raises(BlowUpError) as exc:
        ode_reference(p, (1.0, 1.0), 2.0)
    assert abs(exc.value.t_star - 1.0) < 1e-4
    assert exc.value.partial is not None and exc.value.partial.times[-1] < 1.0


def test_dissipative_drift_has_no_blowup():
    p = ModelParams.from_profile(3, 2, 2, 1, 1)
    tr = ode_reference(p, (1.0, 1.0), 5.0)
    assert np.all(np.isfinite(tr.states))


def test_dynkin_one_step(cfg_a):
    rep = dynkin_one_step(cfg_a, v1, (1.0, 1.0), 1e-5, samples=200_000)
    assert rep.generator == -6.0
    assert rep.passed, rep
    # a wrong generator would be detected: the estimate is far tighter than 1
    assert rep.stderr < 0.05
