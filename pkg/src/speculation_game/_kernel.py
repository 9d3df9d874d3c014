"""Compiled game loop.

Mirrors :func:`speculation_game.engine.step` rule for rule over flat arrays,
consuming the random stream in the same order, so both produce identical
trajectories for the same config.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

from .config import GameConfig
from .series import PriceSeries

_SEED_SCALE = 9007199254740992.0  # 2**53
_ERR_ZERO_MOVE = 1


@njit(inline="always")
def _mix64(x):
    x = (x ^ (x >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> uint64(27))) * uint64(0x94D049BB133111EB)
    return x ^ (x >> uint64(31))


@njit(cache=True)
def _new_player(i, keys, wealth, gains, active, pending, real_a, real_q, real_p, virt_a, virt_p, board_lot, rng):
    keys[i] = _mix64(uint64(rng.random() * _SEED_SCALE))
    wealth[i] = np.floor(board_lot + 100.0 * rng.random())
    for j in range(gains.shape[1]):
        gains[i, j] = 0.0
        virt_a[i, j] = 0
        virt_p[i, j] = 0.0
    active[i] = 0
    pending[i] = -1
    real_a[i] = 0
    real_q[i] = 0
    real_p[i] = 0.0


@njit(cache=True)
def _play(n_players, memory, n_strategies, board_lot, threshold, pb, horizon, p0, idle_closes, rng):
    N = n_players
    S = n_strategies
    base = 4 if pb > 0 else 5
    n_patterns = base**memory

    keys = np.empty(N, np.uint64)
    wealth = np.empty(N)
    gains = np.empty((N, S))
    active = np.empty(N, np.int64)
    pending = np.empty(N, np.int64)
    real_a = np.empty(N, np.int64)
    real_q = np.empty(N, np.int64)
    real_p = np.empty(N)
    virt_a = np.empty((N, S), np.int64)
    virt_p = np.empty((N, S))
    for i in range(N):
        _new_player(i, keys, wealth, gains, active, pending, real_a, real_q, real_p, virt_a, virt_p, board_lot, rng)

    pattern = 0
    for _ in range(memory):
        pattern = pattern * base + int(rng.random() * base)

    pow3 = np.empty(S, np.uint64)
    pow3[0] = 1
    for j in range(1, S):
        pow3[j] = pow3[j - 1] * uint64(3)

    out_price = np.empty(horizon)
    out_dp = np.empty(horizon)
    out_imb = np.empty(horizon)
    out_u = np.empty(horizon)
    out_h = np.empty(horizon, np.int64)
    out_vol = np.empty(horizon, np.int64)

    # real: 0 idle, 1 open, 2 close; virtual: +-1 open with that action, 2 close
    real_order = np.zeros(N, np.int64)
    real_qty = np.zeros(N, np.int64)
    virt_order = np.zeros((N, S), np.int64)

    price = p0
    cog = 0.0
    for t in range(horizon):
        signed = 0
        volume = 0
        for i in range(N):
            if pending[i] >= 0:
                active[i] = pending[i]
                pending[i] = -1
            a_i = active[i]
            x = _mix64(keys[i] + uint64(pattern))
            for j in range(S):
                rec = np.int64((x // pow3[j]) % uint64(3)) - 1
                if j == a_i:
                    virt_order[i, j] = 0
                    real_order[i] = 0
                    if real_a[i] == 0:
                        if rec != 0:
                            q = np.int64(wealth[i] // board_lot)
                            if q >= 1:
                                real_order[i] = 1
                                real_qty[i] = rec * q
                                signed += rec * q
                                volume += q
                    elif rec == -real_a[i] or (rec == 0 and idle_closes):
                        real_order[i] = 2
                        signed -= real_a[i] * real_q[i]
                        volume += real_q[i]
                else:
                    if virt_a[i, j] == 0:
                        virt_order[i, j] = rec
                    elif rec == -virt_a[i, j] or (rec == 0 and idle_closes):
                        virt_order[i, j] = 2
                    else:
                        virt_order[i, j] = 0

        imbalance = signed / N
        u = 0.0
        if pb > 0:
            u = pb * (2.0 * rng.random() - 1.0)
        dp = imbalance + u
        if dp > threshold:
            h = 2
        elif dp > 0:
            h = 1
        elif dp == 0:
            h = 0
        elif dp >= -threshold:
            h = -1
        else:
            h = -2
        if pb > 0 and h == 0:
            return _ERR_ZERO_MOVE, t, out_price, out_dp, out_imb, out_u, out_h, out_vol
        price += dp
        cog += h
        if base == 5:
            digit = h + 2
        elif h < 0:
            digit = h + 2
        else:
            digit = h + 1
        pattern = (pattern * base + digit) % n_patterns

        out_price[t] = price
        out_dp[t] = dp
        out_imb[t] = imbalance
        out_u[t] = u
        out_h[t] = h
        out_vol[t] = volume

        for i in range(N):
            a_i = active[i]
            for j in range(S):
                if j == a_i:
                    continue
                o = virt_order[i, j]
                if o == 2:
                    gains[i, j] += virt_a[i, j] * (cog - virt_p[i, j])
                    virt_a[i, j] = 0
                    virt_p[i, j] = 0.0
                elif o != 0:
                    virt_a[i, j] = o
                    virt_p[i, j] = cog
            o = real_order[i]
            if o == 1:
                q = real_qty[i]
                real_a[i] = 1 if q > 0 else -1
                real_q[i] = abs(q)
                real_p[i] = cog
                virt_a[i, a_i] = real_a[i]
                virt_p[i, a_i] = cog
            elif o == 2:
                gain = real_a[i] * (cog - real_p[i])
                wealth[i] += gain * real_q[i]
                gains[i, a_i] += gain
                real_a[i] = 0
                real_q[i] = 0
                real_p[i] = 0.0
                virt_a[i, a_i] = 0
                virt_p[i, a_i] = 0.0
                best = a_i
                for j in range(S):
                    if gains[i, j] > gains[i, best]:
                        best = j
                if best != a_i:
                    if virt_a[i, best] != 0:
                        gains[i, best] += virt_a[i, best] * (cog - virt_p[i, best])
                        virt_a[i, best] = 0
                        virt_p[i, best] = 0.0
                    pending[i] = best
                if wealth[i] < board_lot:
                    _new_player(
                        i, keys, wealth, gains, active, pending, real_a, real_q, real_p, virt_a, virt_p, board_lot, rng
                    )
    return 0, horizon, out_price, out_dp, out_imb, out_u, out_h, out_vol


def run_compiled(config: GameConfig) -> PriceSeries:
    rng = np.random.default_rng(config.rng_seed)
    err, t, price, dp, imb, u, h, vol = _play(
        config.n_players,
        config.memory,
        config.n_strategies,
        float(config.board_lot),
        float(config.cognitive_threshold),
        float(config.perturbation),
        config.horizon,
        float(config.initial_price),
        config.idle_rule == "close",
        rng,
    )
    if err == _ERR_ZERO_MOVE:
        raise FloatingPointError(f"price change hit exactly 0 under perturbation at step {t + 1}")
    return PriceSeries(
        prices=np.concatenate([[config.initial_price], price]),
        price_change=dp,
        imbalance=imb,
        perturbation=u,
        quantized_move=h,
        volume=vol,
        config=config,
    )
