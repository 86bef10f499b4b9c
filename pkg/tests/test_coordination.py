"""Distributed-protocol tests: message validation, traffic accounting,
bus-vs-direct equivalence and the stopping rule."""

import numpy as np
import pytest

from dmabeam import coordination as coord
from dmabeam import optimizer as opt
from dmabeam.coordination import (BYTES_PER_COMPLEX, ControlMessage,
                                  ExchangeLog, ProtocolError,
                                  assemble_globals, broadcast_round,
                                  run_until_converged)
from dmabeam.harness import ScenarioConfig, build_scenario, run_experiment


def _msg(sender=0, iteration=0, U=2, K=3, fill=1.0 + 0.5j):
    return ControlMessage(sender, iteration,
                          np.full((U, U, K), fill, dtype=complex))


def test_control_message_validation():
    m = _msg()
    assert m.scalar_count == 2 * 2 * 3
    with pytest.raises(ProtocolError):
        ControlMessage(0, 0, np.zeros((2, 3, 4), dtype=complex))
    with pytest.raises(ProtocolError):
        ControlMessage(0, 0, np.full((2, 2, 3), np.nan + 0j))


def test_exchange_log_accounting():
    log = ExchangeLog()
    log.record_round([12, 12])
    log.record_round([12, 12])
    assert log.rounds == 2
    assert log.messages == 4
    assert log.complex_scalars == 48
    assert log.bytes == 48 * BYTES_PER_COMPLEX
    assert log.per_round_scalars == [24, 24]


def test_assemble_globals_errors():
    with pytest.raises(ProtocolError):
        assemble_globals([], 1.0)
    with pytest.raises(ProtocolError):
        assemble_globals([_msg(0, 0), _msg(1, 1)], 1.0)  # mixed iterations
    with pytest.raises(ProtocolError):
        assemble_globals([_msg(0), _msg(0)], 1.0)  # duplicate sender
    with pytest.raises(ProtocolError):
        assemble_globals([_msg(0), _msg(2)], 1.0)  # gap in senders


def test_assemble_globals_matches_direct_sum():
    rng = np.random.default_rng(0)
    cross = rng.standard_normal((2, 2, 2, 3)) \
        + 1j * rng.standard_normal((2, 2, 2, 3))
    msgs = [ControlMessage(b, 5, cross[b]) for b in range(2)]
    terms = assemble_globals(list(reversed(msgs)), 0.4)
    ref = opt.rate_terms_from_cross(cross, 0.4)
    assert terms.sum_rate == ref.sum_rate
    np.testing.assert_array_equal(terms.cross_totals, ref.cross_totals)


def test_broadcast_round_requires_states():
    with pytest.raises(ProtocolError):
        broadcast_round([], 0)


@pytest.fixture(scope="module")
def desk_world():
    cfg = ScenarioConfig.desk_scale(realizations=1, max_iters=40)
    return build_scenario(cfg)


def test_bus_and_direct_bit_identical(desk_world):
    a = run_experiment(desk_world, "robust", 10.0, use_message_bus=True)
    b = run_experiment(desk_world, "robust", 10.0, use_message_bus=False)
    assert a.sum_rate == b.sum_rate
    assert a.iterations == b.iterations
    assert a.trajectory == b.trajectory
    np.testing.assert_array_equal(a.final_precoders, b.final_precoders)
    np.testing.assert_array_equal(a.final_alpha, b.final_alpha)


def test_traffic_is_b_u2_k_scalars_per_round(desk_world):
    cfg = desk_world.config
    res = run_experiment(desk_world, "robust", 10.0)
    per_round = cfg.n_bs * cfg.n_ue**2 * cfg.n_subcarriers
    assert res.bytes_exchanged == res.iterations * per_round \
        * BYTES_PER_COMPLEX


def test_run_until_converged_patience(monkeypatch):
    # |delta| sequence: big, 5e-4, 4e-4, big, 0, 0, ...
    objs = [0.0, 1.0, 1.0005, 1.0009, 2.0, 2.0, 2.0, 2.0]

    class FakeRun:
        objective = 0.0

    def fake_iter(run, t):
        run.objective = objs[t]
        return float(t)

    monkeypatch.setattr(coord, "run_iteration", fake_iter)
    traj, trace = run_until_converged(FakeRun(), 1e-3, 8, patience=2)
    assert len(trace) == 4  # stops on the 2nd consecutive hit (t = 3)
    assert trace == objs[:4]
    traj, trace = run_until_converged(FakeRun(), 1e-3, 8, patience=3)
    assert len(trace) == 8  # the t=4 jump resets the counter
    traj, trace = run_until_converged(FakeRun(), 1e-3, 8, patience=1)
    assert len(trace) == 3


def test_run_until_converged_cap(monkeypatch):
    def fake_iter(run, t):
        run.objective = float(t)  # never settles
        return 0.0

    class FakeRun:
        objective = 0.0

    monkeypatch.setattr(coord, "run_iteration", fake_iter)
    traj, trace = run_until_converged(FakeRun(), 1e-3, 12, patience=2)
    assert len(trace) == 12


def test_run_until_converged_validation():
    with pytest.raises(ValueError):
        run_until_converged(None, 0.0, 10)
    with pytest.raises(ValueError):
        run_until_converged(None, 1e-3, 10, patience=0)
