import pytest

from speculation_game.engine import (
    IDLE,
    MarketState,
    Order,
    OrderKind,
    Player,
    Position,
    aggregate_price_change,
    best_strategy,
    draw_initial_wealth,
    initial_wealth,
    new_player,
    order_quantity,
    quantize_move,
    recommend_action,
    replace_if_bankrupt,
    resolve_order,
    resolve_position,
    review_best_strategy,
    round_trip_gain,
    settle_round_trip,
    update_cognitive_price,
)
from speculation_game.strategy import QUINARY, Strategy
from speculation_game import GameConfig

from conftest import StubRng


def flat_player(wealth=50.0, n_strategies=2, memory=3, value=0):
    strategies = [Strategy([value] * 5**memory, memory, QUINARY) for _ in range(n_strategies)]
    return Player(wealth=wealth, strategies=strategies)


class TestInitialWealth:
    @pytest.mark.parametrize("u, expected", [(0.0, 9), (99.999, 108), (41.7, 50)])
    def test_examples(self, u, expected):
        assert initial_wealth(9, u) == expected

    def test_draw_scales_unit_uniform(self):
        assert draw_initial_wealth(9, StubRng(0.417)) == 50
        assert draw_initial_wealth(9, StubRng(0.0)) == 9
        assert draw_initial_wealth(9, StubRng(0.9999999)) == 108

    def test_range(self, rng):
        draws = [draw_initial_wealth(9, rng) for _ in range(2000)]
        assert min(draws) >= 9 and max(draws) <= 108
        assert all(float(d).is_integer() for d in draws)


@pytest.mark.parametrize("wealth, expected", [(9, 1), (8.5, 0), (50, 5), (108, 12)])
def test_order_quantity(wealth, expected):
    assert order_quantity(wealth, 9) == expected


class TestRecommendAction:
    def table2(self):
        rows = {
            (-2, -2, -2): 1,
            (-2, -2, -1): 0,
            (-2, -2, 0): 0,
            (-2, -2, 1): -1,
            (-2, -2, 2): 1,
            (-2, -1, -2): 0,
            (2, 2, 2): -1,
        }
        return Strategy.from_mapping(rows, memory=3, default=0)

    def test_table_rows(self):
        player = Player(wealth=50.0, strategies=[self.table2()])
        assert recommend_action(player, (-2, -2, -2)) == 1
        assert recommend_action(player, (-2, -2, 1)) == -1
        assert recommend_action(player, (2, 2, 2)) == -1

    def test_constant_table(self):
        player = flat_player(value=0)
        for tail in [(0, 0, 0), (2, -1, 1), (-2, -2, -2)]:
            assert recommend_action(player, tail) == 0

    def test_uses_active_strategy(self):
        player = Player(
            wealth=50.0,
            strategies=[Strategy([1] * 125, 3, QUINARY), Strategy([-1] * 125, 3, QUINARY)],
            active_index=1,
        )
        assert recommend_action(player, (0, 0, 0)) == -1

    def test_wrong_tail_length(self):
        with pytest.raises(ValueError):
            recommend_action(flat_player(), (0, 0))


class TestResolveOrder:
    def test_flat_opens_with_full_quantity(self):
        assert resolve_order(flat_player(50.0), 1, 9) == Order(OrderKind.OPEN, 1, 5)
        assert resolve_order(flat_player(50.0), -1, 9) == Order(OrderKind.OPEN, -1, 5)

    def test_flat_idle(self):
        assert resolve_order(flat_player(50.0), 0, 9) is IDLE

    def test_flat_cannot_afford(self):
        assert resolve_order(flat_player(8.5), 1, 9) is IDLE

    def test_same_direction_holds(self):
        p = flat_player()
        p.real_position.open(1, 5, 0.0)
        assert resolve_order(p, 1, 9) is IDLE

    def test_opposite_closes_with_opening_quantity(self):
        p = flat_player(wealth=500.0)
        p.real_position.open(1, 5, 0.0)
        assert resolve_order(p, -1, 9) == Order(OrderKind.CLOSE, -1, 5)

    def test_zero_holds_by_default(self):
        p = flat_player()
        p.real_position.open(-1, 3, 0.0)
        assert resolve_order(p, 0, 9) is IDLE

    def test_zero_closes_under_close_rule(self):
        pos = Position(open_action=-1, open_quantity=3)
        assert resolve_position(pos, 0, 5, idle_rule="close") == Order(OrderKind.CLOSE, 1, 3)


class TestAggregatePriceChange:
    def test_no_orders(self):
        assert aggregate_price_change([], 10, 0.0) == (0.0, 0.0)

    def test_imbalance(self):
        assert aggregate_price_change([(1, 3), (-1, 1)], 4, 0.0) == (0.5, 0.0)

    def test_pure_perturbation(self):
        # u = 0.25 * (2 * 0.3 - 1) = -0.1
        dp, draw = aggregate_price_change([], 10, 0.25, StubRng(0.3))
        assert draw == pytest.approx(-0.1, abs=1e-15)
        assert dp == draw

    def test_no_draw_without_perturbation(self):
        rng = StubRng()
        aggregate_price_change([(1, 1)], 1, 0.0, rng)

    def test_draw_range(self, rng):
        draws = [aggregate_price_change([], 1, 0.25, rng)[1] for _ in range(5000)]
        assert -0.25 <= min(draws) and max(draws) < 0.25


class TestQuantize:
    @pytest.mark.parametrize(
        "dp, expected",
        [(5, 2), (3.0000001, 2), (3, 1), (0.001, 1), (0, 0), (-0.001, -1), (-3, -1), (-3.0000001, -2), (-7, -2)],
    )
    def test_thresholds(self, dp, expected):
        assert quantize_move(dp, 3) == expected


def test_update_cognitive_price():
    assert update_cognitive_price(0, 2) == 2
    assert update_cognitive_price(5, -1) == 4
    P = 0
    for h in (1, 1, -2):
        P = update_cognitive_price(P, h)
    assert P == 0


@pytest.mark.parametrize("a, p0, p1, expected", [(1, 3, 7, 4), (-1, 3, 7, -4), (1, 5, 5, 0)])
def test_round_trip_gain(a, p0, p1, expected):
    assert round_trip_gain(a, p0, p1) == expected


def test_round_trip_gain_rejects_flat():
    with pytest.raises(ValueError):
        round_trip_gain(0, 1, 2)


class TestSettle:
    def test_virtual_accumulates(self):
        p = flat_player()
        p.accumulated_gains[1] = 2.0
        p.virtual_positions[1].open(1, 1, 0.0)
        settle_round_trip(p, 1, 4.0, 1, is_real=False)
        assert p.accumulated_gains[1] == 6.0
        assert not p.virtual_positions[1].is_open
        assert p.wealth == 50.0

    def test_real_moves_wealth(self):
        p = flat_player(50.0)
        p.real_position.open(1, 5, 0.0)
        p.virtual_positions[0].open(1, 1, 0.0)
        settle_round_trip(p, 0, -3.0, 5, is_real=True)
        assert p.wealth == 35.0
        assert p.accumulated_gains[0] == -3.0
        assert not p.real_position.is_open and not p.virtual_positions[0].is_open

    def test_neutral(self):
        p = flat_player(50.0)
        p.real_position.open(-1, 5, 2.0)
        p.virtual_positions[0].open(-1, 1, 2.0)
        settle_round_trip(p, 0, 0.0, 5, is_real=True)
        assert p.wealth == 50.0 and p.accumulated_gains == [0.0, 0.0]

    def test_closed_position_fails(self):
        with pytest.raises(RuntimeError):
            settle_round_trip(flat_player(), 0, 1.0, 1, is_real=True)
        with pytest.raises(RuntimeError):
            settle_round_trip(flat_player(), 1, 1.0, 1, is_real=False)


class TestReview:
    def test_tie_keeps_incumbent(self):
        p = flat_player()
        p.accumulated_gains = [5.0, 5.0]
        review_best_strategy(p, 0.0)
        assert p.pending_switch is None

    def test_strict_argmax_switches_next_step(self):
        p = flat_player()
        p.accumulated_gains = [2.0, 7.0]
        review_best_strategy(p, 0.0)
        assert p.pending_switch == 1 and p.active_index == 0

    def test_open_virtual_closed_at_current_price(self):
        p = flat_player()
        p.accumulated_gains = [2.0, 7.0]
        p.virtual_positions[1].open(1, 1, 3.0)
        review_best_strategy(p, 6.0)
        assert p.accumulated_gains == [2.0, 10.0]
        assert p.pending_switch == 1
        assert not p.virtual_positions[1].is_open

    def test_ties_among_challengers_pick_lowest(self):
        assert best_strategy([0.0, 4.0, 4.0], incumbent=0) == 1
        assert best_strategy([4.0, 1.0, 4.0], incumbent=2) == 2


class TestBankruptcy:
    config = GameConfig(n_players=1, memory=2, horizon=1)

    def test_strictly_below_lot_is_replaced(self):
        p = flat_player(8.9, memory=2)
        q = replace_if_bankrupt(p, self.config, StubRng(0.5, 0.2))
        assert q is not p
        assert q.wealth == 29.0
        assert order_quantity(q.wealth, 9) >= 1
        assert q.accumulated_gains == [0.0, 0.0] and q.active_index == 0 and q.pending_switch is None
        assert not q.real_position.is_open and not any(v.is_open for v in q.virtual_positions)

    def test_boundary_kept(self):
        p = flat_player(9.0, memory=2)
        assert replace_if_bankrupt(p, self.config, StubRng()) is p

    def test_new_player_tables_are_total(self, rng):
        q = new_player(GameConfig(memory=3, perturbation=0.1), rng)
        assert len(q.strategies) == 2
        for s in q.strategies:
            assert len(s) == 4**3
            assert set(s.actions.tolist()) <= {-1, 0, 1}


def test_market_state_tail():
    s = MarketState(price=100.0, history=[1, 2, -1])
    assert s.tail(2) == (2, -1)
    with pytest.raises(ValueError):
        s.tail(4)


def test_position_cannot_double_open():
    pos = Position()
    pos.open(1, 2, 0.0)
    with pytest.raises(RuntimeError):
        pos.open(1, 2, 0.0)
