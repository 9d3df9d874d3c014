import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import speculation_game.engine as engine
from speculation_game import GameConfig, SpeculationGame, run
from speculation_game.config import ConfigError
from speculation_game.engine import MarketState, Player, best_strategy, quantize_move, step
from speculation_game.strategy import QUATERNARY, QUINARY, Strategy

from conftest import StubRng


def test_quiescent_step():
    config = GameConfig(n_players=3, memory=2, n_strategies=1, horizon=1)
    players = [Player(wealth=50.0, strategies=[Strategy([0] * 25, 2, QUINARY)]) for _ in range(3)]
    state = MarketState(price=100.0, history=[1, -1])
    state, rec = step(state, players, config, StubRng())
    assert rec.price_change == 0 and rec.quantized_move == 0 and rec.traded_volume == 0
    assert state.price == 100.0 and state.cognitive_price == 0 and state.time == 1
    assert all(p.wealth == 50.0 and not p.real_position.is_open for p in players)


def test_hand_traced_round_trip():
    # One player, one lot.  Perturbation draws u = 5 * (2r - 1) steer the moves:
    # step 1 opens long (dp = 1 + 3 -> h = 2), step 2 holds (dp = 0.5 -> h = 1),
    # step 3 closes (dp = -1 + 2 -> h = 1).  P goes 2 -> 3 -> 4, so the round trip
    # earns P(3) - P(1) = 2 on one lot.
    config = GameConfig(n_players=1, memory=1, n_strategies=1, perturbation=5.0, cognitive_threshold=3.0, horizon=3)
    table = Strategy.from_mapping({(-2,): 1, (2,): 0, (1,): -1, (-1,): 0}, memory=1, alphabet=QUATERNARY)
    players = [Player(wealth=9.0, strategies=[table])]
    state = MarketState(price=100.0, history=[-2])
    rng = StubRng(0.8, 0.55, 0.7)
    records = [step(state, players, config, rng)[1] for _ in range(3)]
    assert [r.quantized_move for r in records] == [2, 1, 1]
    assert [r.speculative_imbalance for r in records] == [1.0, 0.0, -1.0]
    assert state.cognitive_price == 4
    assert players[0].wealth == 11.0
    assert players[0].accumulated_gains == [2.0]
    assert not players[0].real_position.is_open


def test_pending_switch_applies_next_step():
    config = GameConfig(n_players=1, memory=1, n_strategies=2, horizon=1)
    buy = Strategy([1] * 5, 1, QUINARY)
    sell = Strategy([-1] * 5, 1, QUINARY)
    p = Player(wealth=50.0, strategies=[buy, sell], pending_switch=1, accumulated_gains=[0.0, 3.0])
    state = MarketState(price=100.0, history=[0])
    _, rec = step(state, [p], config, StubRng())
    assert p.active_index == 1 and p.pending_switch is None
    assert rec.speculative_imbalance == -5.0
    assert p.real_position.open_action == -1


class TestTrajectory:
    def test_zero_horizon(self):
        s = run(GameConfig(n_players=5, memory=2, horizon=0))
        assert list(s.prices) == [100.0]
        assert s.horizon == 0

    def test_negative_horizon_rejected(self):
        with pytest.raises(ConfigError):
            GameConfig(horizon=-1)

    def test_same_seed_identical(self):
        c = GameConfig(n_players=50, horizon=3000, perturbation=0.25, rng_seed=4)
        assert run(c).same_as(run(c))

    def test_different_seed_differs(self):
        c = GameConfig(n_players=50, horizon=500, perturbation=0.25, rng_seed=4)
        assert not run(c).same_as(run(c.replace(rng_seed=5)))

    def test_quaternary_history_under_perturbation(self):
        s = run(GameConfig(n_players=100, horizon=5000, perturbation=0.05, rng_seed=2))
        assert set(np.unique(s.quantized_move)) <= {-2, -1, 1, 2}

    def test_baseline_reduces_to_order_imbalance(self):
        s = run(GameConfig(n_players=100, horizon=5000, perturbation=0.0, rng_seed=2))
        assert np.all(s.perturbation == 0.0)
        assert s.price_change.tobytes() == s.imbalance.tobytes()
        assert 0 in set(s.quantized_move.tolist())

    def test_price_accumulates_changes(self):
        s = run(GameConfig(n_players=100, horizon=2000, perturbation=0.3, rng_seed=9))
        np.testing.assert_allclose(np.diff(s.prices), s.price_change, rtol=0, atol=1e-9)

    def test_quantization_consistency(self):
        c = GameConfig(n_players=100, horizon=3000, perturbation=0.2, rng_seed=1)
        s = run(c)
        for rec in s.records():
            assert quantize_move(rec.price_change, c.cognitive_threshold) == rec.quantized_move

    def test_rejects_unknown_backend(self):
        with pytest.raises(ValueError):
            run(GameConfig(n_players=2, horizon=1), backend="gpu")


# -- compiled kernel vs reference engine ---------------------------------------

game_configs = st.builds(
    GameConfig,
    n_players=st.integers(1, 8),
    memory=st.integers(1, 3),
    n_strategies=st.integers(1, 4),
    board_lot=st.integers(1, 20),
    cognitive_threshold=st.sampled_from([0.5, 1.0, 3.0]),
    perturbation=st.sampled_from([0.0, 0.0, 0.1, 0.25, 1.0]),
    horizon=st.integers(0, 150),
    initial_price=st.just(100.0),
    rng_seed=st.integers(0, 2**64 - 1),
    idle_rule=st.sampled_from(["hold", "close"]),
)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(game_configs)
def test_compiled_matches_reference(config):
    assert run(config).same_as(run(config, backend="reference"))


@pytest.mark.parametrize("pb", [0.0, 0.25])
@pytest.mark.parametrize("idle_rule", ["hold", "close"])
def test_compiled_matches_reference_long(pb, idle_rule):
    c = GameConfig(n_players=25, memory=3, n_strategies=3, perturbation=pb, horizon=2000, rng_seed=77, idle_rule=idle_rule)
    assert run(c).same_as(run(c, backend="reference"))


# -- audits on the reference engine --------------------------------------------


class Audit:
    """Wraps settlement and order resolution to log every real round trip."""

    def __init__(self, monkeypatch):
        self.settled = {}
        self.orders = {}
        settle, resolve = engine.settle_round_trip, engine.resolve_order

        def settle_spy(player, j, gain, q, is_real):
            if is_real:
                self.settled.setdefault(id(player), []).append(gain * q)
            return settle(player, j, gain, q, is_real)

        def resolve_spy(player, rec, board_lot, idle_rule="hold"):
            order = resolve(player, rec, board_lot, idle_rule)
            if order.kind is not engine.OrderKind.IDLE:
                self.orders.setdefault(id(player), []).append(order)
            return order

        monkeypatch.setattr(engine, "settle_round_trip", settle_spy)
        monkeypatch.setattr(engine, "resolve_order", resolve_spy)


@pytest.mark.parametrize("pb", [0.0, 0.3])
def test_wealth_audit_and_round_trips(monkeypatch, pb):
    audit = Audit(monkeypatch)
    game = SpeculationGame(GameConfig(n_players=30, memory=2, n_strategies=3, perturbation=pb, horizon=1500, rng_seed=3))
    start = {id(p): (p, p.wealth) for p in game.players}
    replaced = 0
    for _ in range(game.config.horizon):
        before = {id(p) for p in game.players}
        game.step()
        replaced += len(before - {id(p) for p in game.players})
    assert replaced > 0, "trajectory should exercise bankruptcy"

    survivors = [p for p in game.players if id(p) in start]
    assert survivors
    for p in survivors:
        w0 = start[id(p)][1]
        assert p.wealth - w0 == pytest.approx(sum(audit.settled.get(id(p), [])), abs=1e-9)

    for orders in audit.orders.values():
        for k, order in enumerate(orders):
            expected = engine.OrderKind.OPEN if k % 2 == 0 else engine.OrderKind.CLOSE
            assert order.kind is expected
            if order.kind is engine.OrderKind.CLOSE:
                opening = orders[k - 1]
                assert order.quantity == opening.quantity
                assert order.action == -opening.action


def test_cognitive_price_telescopes():
    game = SpeculationGame(GameConfig(n_players=20, memory=3, perturbation=0.2, horizon=800, rng_seed=8))
    game.run()
    assert game.state.cognitive_price == sum(game.state.history[3:])
    assert game.state.cognitive_price == sum(r.quantized_move for r in game.records)


def test_active_virtual_mirrors_real():
    game = SpeculationGame(GameConfig(n_players=20, memory=2, n_strategies=3, horizon=600, rng_seed=5))
    for _ in range(600):
        game.step()
        for p in game.players:
            v = p.virtual_positions[p.active_index]
            assert v.open_action == p.real_position.open_action
            if v.is_open:
                assert v.open_cognitive_price == p.real_position.open_cognitive_price
            assert p.wealth >= game.config.board_lot


@given(
    st.lists(st.integers(-1000, 1000), min_size=1, max_size=6).flatmap(
        lambda g: st.tuples(st.just(g), st.integers(0, len(g) - 1), st.integers(-10**6, 10**6))
    )
)
def test_argmax_shift_invariance(args):
    gains, incumbent, shift = args
    shifted = [float(g + shift) for g in gains]
    assert best_strategy(shifted, incumbent) == best_strategy([float(g) for g in gains], incumbent)
