import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foveastream.netmon import NetState
from foveastream.ratectl import ControllerState, FoveationController, run_schedule, step

U, N, O, T = NetState.UNDERUSE, NetState.NORMAL, NetState.OVERUSE, NetState.TIMEOUT


def _at(c):
    return ControllerState(c=c)


def test_defaults():
    s = ControllerState()
    assert (s.c, s.c_min, s.c_max, s.alpha, s.beta, s.beta_timeout) == (120, 6, 120, 0.2, 0.9, 0.85)


@pytest.mark.parametrize("event, expected", [(U, 100.2), (O, 90.0), (T, 85.0), (N, 100.0)])
def test_single_step_from_100(event, expected):
    assert step(_at(100.0), event).c == pytest.approx(expected, abs=1e-12)


def test_clamped_at_bounds():
    assert step(_at(6.0), O).c == 6.0
    assert step(_at(6.0), T).c == 6.0
    assert step(_at(120.0), U).c == 120.0


def test_hundred_underuse_from_minimum():
    assert run_schedule(_at(6.0), [U] * 100)[-1] == pytest.approx(26.0, abs=1e-9)


@pytest.mark.parametrize("k", [1, 5, 20, 28, 29, 60])
def test_overuse_geometric_decay(k):
    assert run_schedule(_at(120.0), [O] * k)[-1] == pytest.approx(max(6.0, 120 * 0.9 ** k), rel=1e-12)


def test_all_normal_holds():
    assert run_schedule(_at(42.0), [N] * 50) == [42.0] * 50


def test_invalid_states_rejected():
    for kwargs in [dict(c=5.0), dict(c=121.0), dict(c_min=0.0, c=1.0), dict(alpha=0.0),
                   dict(beta=1.0), dict(beta_timeout=0.95)]:
        with pytest.raises(ValueError):
            ControllerState(**kwargs)


def test_unknown_event_rejected():
    with pytest.raises(TypeError):
        step(_at(50.0), "overuse")


events = st.lists(st.sampled_from(list(NetState)), max_size=300)


@given(st.floats(6.0, 120.0), events)
def test_clamp_invariant(c0, seq):
    for c in run_schedule(_at(c0), seq):
        assert 6.0 <= c <= 120.0


@given(st.floats(6.0, 100.0), st.integers(1, 50))
def test_aimd_asymmetry(c0, n):
    top = run_schedule(_at(c0), [U] * n)[-1]
    after = step(dataclasses.replace(_at(c0), c=top), O).c
    assert top == pytest.approx(min(120.0, c0 + n * 0.2), abs=1e-9)
    assert after == pytest.approx(max(6.0, 0.9 * top), rel=1e-12)
    assert after < top


@given(st.floats(6.0, 120.0), events)
def test_schedule_deterministic(c0, seq):
    assert run_schedule(_at(c0), seq) == run_schedule(_at(c0), seq)


def test_controller_logs_transitions():
    ctl = FoveationController(_at(100.0))
    ctl.on_event(O)
    ctl.on_event(U)
    assert ctl.c == pytest.approx(90.2)
    assert ctl.log[0] == [0, "overuse", "100.000000", "90.000000"]
    assert FoveationController.HEADER == ["event_idx", "event", "c_before", "c_after"]


def test_frozen_controller_never_moves():
    ctl = FoveationController(_at(120.0), frozen=True)
    for ev in [O, T, O, U]:
        assert ctl.on_event(ev) == 120.0
    assert len(ctl.log) == 4
