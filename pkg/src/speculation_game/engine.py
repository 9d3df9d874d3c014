"""Reference implementation of the speculation game.

Everything here is plain Python over small objects so that each rule can be
exercised and inspected on its own.  ``run`` dispatches to the compiled
kernel in :mod:`speculation_game._kernel` by default; both paths consume the
random stream in the same order and produce bit-identical trajectories.

Random-stream layout (every draw is one ``rng.random()`` double):

* initialization: for each player in index order, one draw for the strategy
  key then one for the wealth; then ``memory`` draws for the initial history.
* each step: one perturbation draw (only when ``perturbation > 0``), then,
  in player order, two draws per bankrupt player replaced at the end of the
  step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Protocol, Sequence

import numpy as np

from .config import GameConfig
from .series import PriceSeries
from .strategy import Strategy, encode_pattern, player_key_from_uniform

INITIAL_WEALTH_SPAN = 100.0


class RandomSource(Protocol):
    def random(self) -> float: ...


class OrderKind(enum.Enum):
    IDLE = "idle"
    OPEN = "open"
    CLOSE = "close"


class Order(NamedTuple):
    kind: OrderKind
    action: int = 0
    quantity: int = 0

    @property
    def signed_quantity(self) -> int:
        return self.action * self.quantity


IDLE = Order(OrderKind.IDLE)


@dataclass
class Position:
    open_action: int = 0
    open_quantity: int = 0
    open_cognitive_price: float = 0.0

    @property
    def is_open(self) -> bool:
        return self.open_action != 0

    def open(self, action: int, quantity: int, cognitive_price: float) -> None:
        if self.is_open:
            raise RuntimeError("position is already open")
        if action not in (-1, 1):
            raise ValueError(f"opening action must be +-1, got {action}")
        self.open_action = action
        self.open_quantity = quantity
        self.open_cognitive_price = cognitive_price

    def clear(self) -> None:
        self.open_action = 0
        self.open_quantity = 0
        self.open_cognitive_price = 0.0


@dataclass
class Player:
    wealth: float
    strategies: list[Strategy]
    accumulated_gains: list[float] = field(default_factory=list)
    active_index: int = 0
    real_position: Position = field(default_factory=Position)
    virtual_positions: list[Position] = field(default_factory=list)
    pending_switch: int | None = None

    def __post_init__(self) -> None:
        n = len(self.strategies)
        if not self.accumulated_gains:
            self.accumulated_gains = [0.0] * n
        if not self.virtual_positions:
            self.virtual_positions = [Position() for _ in range(n)]
        if len(self.accumulated_gains) != n or len(self.virtual_positions) != n:
            raise ValueError("gains and virtual positions need one entry per strategy")

    @property
    def active_strategy(self) -> Strategy:
        return self.strategies[self.active_index]


@dataclass
class MarketState:
    price: float
    history: list[int]
    cognitive_price: float = 0.0
    time: int = 0

    def tail(self, memory: int) -> tuple[int, ...]:
        if len(self.history) < memory:
            raise ValueError(f"history holds {len(self.history)} digits, need {memory}")
        return tuple(self.history[-memory:])


@dataclass(frozen=True)
class StepRecord:
    time: int
    price: float
    price_change: float
    speculative_imbalance: float
    perturbation_draw: float
    quantized_move: int
    traded_volume: int


# -- single-rule operations -------------------------------------------------


def initial_wealth(board_lot: int, u: float) -> float:
    return float(math.floor(board_lot + u))


def draw_initial_wealth(board_lot: int, rng: RandomSource) -> float:
    """Wealth of a new player: floor(B + U[0, 100)), so at least one lot."""
    return initial_wealth(board_lot, INITIAL_WEALTH_SPAN * rng.random())


def order_quantity(wealth: float, board_lot: int) -> int:
    return int(wealth // board_lot)


def recommend_action(player: Player, history_tail: Sequence[int]) -> int:
    return player.active_strategy.lookup(history_tail)


def resolve_position(position: Position, recommendation: int, quantity: int, idle_rule: str = "hold") -> Order:
    """Turn a recommendation into an order against one (real or virtual) position.

    A flat position opens on +-1 when at least one lot is affordable.  An open
    position is held when the recommendation repeats the opening action and
    closed on the opposite action; ``idle_rule`` decides the 0 case.
    """
    if not position.is_open:
        if recommendation != 0 and quantity >= 1:
            return Order(OrderKind.OPEN, recommendation, quantity)
        return IDLE
    if recommendation == -position.open_action or (recommendation == 0 and idle_rule == "close"):
        return Order(OrderKind.CLOSE, -position.open_action, position.open_quantity)
    return IDLE


def resolve_order(player: Player, recommendation: int, board_lot: int, idle_rule: str = "hold") -> Order:
    quantity = order_quantity(player.wealth, board_lot)
    return resolve_position(player.real_position, recommendation, quantity, idle_rule)


def aggregate_price_change(
    orders: Iterable[tuple[int, int]],
    n_players: int,
    perturbation: float,
    rng: RandomSource | None = None,
) -> tuple[float, float]:
    """Order imbalance per player plus one shared U[-Pb, Pb) draw.

    Returns ``(price_change, draw)``.  No draw is consumed when the
    perturbation is 0.
    """
    imbalance = sum(a * q for a, q in orders) / n_players
    draw = perturbation_draw(perturbation, rng) if perturbation > 0 else 0.0
    return imbalance + draw, draw


def perturbation_draw(perturbation: float, rng: RandomSource) -> float:
    return perturbation * (2.0 * rng.random() - 1.0)


def quantize_move(price_change: float, threshold: float) -> int:
    if price_change > threshold:
        return 2
    if price_change > 0:
        return 1
    if price_change == 0:
        return 0
    if price_change >= -threshold:
        return -1
    return -2


def update_cognitive_price(cognitive_price: float, move: int) -> float:
    return cognitive_price + move


def round_trip_gain(open_action: int, open_price: float, close_price: float) -> float:
    if open_action not in (-1, 1):
        raise ValueError(f"open_action must be +-1, got {open_action}")
    return open_action * (close_price - open_price)


def settle_round_trip(player: Player, strategy_index: int, gain: float, quantity_at_open: int, is_real: bool) -> Player:
    """Book a closed round trip.

    Gains accumulate on the strategy; a real close also moves wealth by
    gain * opening quantity and flattens the active strategy's virtual mirror.
    """
    virtual = player.virtual_positions[strategy_index]
    if is_real:
        if not player.real_position.is_open:
            raise RuntimeError("settling a real round trip with no open position")
        if strategy_index != player.active_index:
            raise RuntimeError("real round trips belong to the active strategy")
        player.wealth += gain * quantity_at_open
        player.real_position.clear()
    elif not virtual.is_open:
        raise RuntimeError(f"settling strategy {strategy_index} with no open virtual position")
    player.accumulated_gains[strategy_index] += gain
    virtual.clear()
    return player


def best_strategy(gains: Sequence[float], incumbent: int) -> int:
    """Argmax of gains; ties keep the incumbent, then the lowest index."""
    best = incumbent
    for j, g in enumerate(gains):
        if g > gains[best]:
            best = j
    return best


def review_best_strategy(player: Player, cognitive_price: float) -> Player:
    best = best_strategy(player.accumulated_gains, player.active_index)
    if best == player.active_index:
        return player
    virtual = player.virtual_positions[best]
    if virtual.is_open:
        gain = round_trip_gain(virtual.open_action, virtual.open_cognitive_price, cognitive_price)
        settle_round_trip(player, best, gain, 0, is_real=False)
    player.pending_switch = best
    return player


def new_player(config: GameConfig, rng: RandomSource) -> Player:
    key = player_key_from_uniform(rng.random())
    wealth = draw_initial_wealth(config.board_lot, rng)
    alphabet = config.alphabet
    strategies = [Strategy.from_key(key, j, config.memory, alphabet) for j in range(config.n_strategies)]
    return Player(wealth=wealth, strategies=strategies)


def replace_if_bankrupt(player: Player, config: GameConfig, rng: RandomSource) -> Player:
    if player.wealth < config.board_lot:
        return new_player(config, rng)
    return player


def initial_history(config: GameConfig, rng: RandomSource) -> list[int]:
    alphabet = config.alphabet
    return [alphabet[int(rng.random() * len(alphabet))] for _ in range(config.memory)]


# -- the game loop ----------------------------------------------------------


def step(
    state: MarketState, players: list[Player], config: GameConfig, rng: RandomSource
) -> tuple[MarketState, StepRecord]:
    """Advance the market by one period, mutating ``state`` and ``players``.

    Decisions are simultaneous: everyone reads the same history tail, then the
    price forms, then positions settle against the new cognitive price.
    Players replaced for bankruptcy are swapped into ``players`` in place.
    """
    tail = state.tail(config.memory)
    pattern = encode_pattern(tail, config.alphabet)
    idle_rule = config.idle_rule

    real_orders: list[Order] = []
    virtual_orders: list[list[Order]] = []
    for player in players:
        if player.pending_switch is not None:
            player.active_index = player.pending_switch
            player.pending_switch = None
        orders = []
        for j, strategy in enumerate(player.strategies):
            rec = strategy.lookup_index(pattern)
            if j == player.active_index:
                real_orders.append(resolve_order(player, rec, config.board_lot, idle_rule))
                orders.append(IDLE)
            else:
                orders.append(resolve_position(player.virtual_positions[j], rec, 1, idle_rule))
        virtual_orders.append(orders)

    submitted = [(o.action, o.quantity) for o in real_orders if o.kind is not OrderKind.IDLE]
    imbalance = sum(a * q for a, q in submitted) / config.n_players
    price_change, draw = aggregate_price_change(submitted, config.n_players, config.perturbation, rng)
    volume = sum(q for _, q in submitted)

    move = quantize_move(price_change, config.cognitive_threshold)
    if config.perturbation > 0 and move == 0:
        raise FloatingPointError("price change hit exactly 0 under perturbation")
    state.price += price_change
    state.history.append(move)
    state.cognitive_price = update_cognitive_price(state.cognitive_price, move)
    state.time += 1
    P = state.cognitive_price

    for i, player in enumerate(players):
        for j, order in enumerate(virtual_orders[i]):
            virtual = player.virtual_positions[j]
            if order.kind is OrderKind.OPEN:
                virtual.open(order.action, 1, P)
            elif order.kind is OrderKind.CLOSE:
                gain = round_trip_gain(virtual.open_action, virtual.open_cognitive_price, P)
                settle_round_trip(player, j, gain, 0, is_real=False)
        order = real_orders[i]
        if order.kind is OrderKind.OPEN:
            player.real_position.open(order.action, order.quantity, P)
            player.virtual_positions[player.active_index].open(order.action, 1, P)
        elif order.kind is OrderKind.CLOSE:
            position = player.real_position
            gain = round_trip_gain(position.open_action, position.open_cognitive_price, P)
            settle_round_trip(player, player.active_index, gain, position.open_quantity, is_real=True)
            review_best_strategy(player, P)
            players[i] = replace_if_bankrupt(player, config, rng)

    record = StepRecord(
        time=state.time,
        price=state.price,
        price_change=price_change,
        speculative_imbalance=imbalance,
        perturbation_draw=draw,
        quantized_move=move,
        traded_volume=volume,
    )
    return state, record


class SpeculationGame:
    """Step-by-step game on the reference engine.

    >>> game = SpeculationGame(GameConfig(n_players=10, horizon=5, rng_seed=1))
    >>> len(game.run().prices)
    6
    """

    def __init__(self, config: GameConfig):
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.players = [new_player(config, self.rng) for _ in range(config.n_players)]
        self.state = MarketState(price=config.initial_price, history=initial_history(config, self.rng))
        self.records: list[StepRecord] = []

    def step(self) -> StepRecord:
        _, record = step(self.state, self.players, self.config, self.rng)
        self.records.append(record)
        return record

    def run(self, steps: int | None = None) -> PriceSeries:
        for _ in range(self.config.horizon if steps is None else steps):
            self.step()
        return PriceSeries.from_records(self.records, self.config.initial_price, config=self.config)


def run(config: GameConfig, backend: str = "compiled") -> PriceSeries:
    """Play ``config.horizon`` steps and return the full trajectory.

    ``backend="compiled"`` uses the numba kernel; ``"reference"`` plays the
    same game through :class:`SpeculationGame` (slow, for checking).
    """
    if backend == "reference":
        return SpeculationGame(config).run()
    if backend != "compiled":
        raise ValueError(f"unknown backend {backend!r}")
    from ._kernel import run_compiled

    return run_compiled(config)
