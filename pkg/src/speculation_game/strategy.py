"""Strategy tables and history-pattern encoding.

A player's S strategy tables are not stored explicitly.  Each player carries
a 64-bit key; the recommended action of strategy ``j`` for pattern index
``k`` is the ``j``-th base-3 digit of ``mix64(player_key + k)``, shifted to
{-1, 0, +1}.  Tables are therefore total by construction, cost nothing to
create when a bankrupt player is replaced, and can still be materialized in
full for inspection.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

_MASK = (1 << 64) - 1
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB

QUINARY = (-2, -1, 0, 1, 2)
QUATERNARY = (-2, -1, 1, 2)

# Uniform [0, 1) doubles carry 53 random bits.
_SEED_SCALE = float(2**53)


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int (64-bit wraparound)."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * _C1) & _MASK
    x = ((x ^ (x >> 27)) * _C2) & _MASK
    return x ^ (x >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_C1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_C2)
    return x ^ (x >> np.uint64(31))


def player_key_from_uniform(u: float) -> int:
    """Turn one uniform draw into a player's strategy key."""
    return mix64(int(u * _SEED_SCALE))


def hashed_action(player_key: int, strategy_index: int, pattern: int) -> int:
    x = mix64(player_key + pattern)
    return (x // 3**strategy_index) % 3 - 1


def alphabet_for(perturbation: float) -> tuple[int, ...]:
    return QUATERNARY if perturbation > 0 else QUINARY


def digit_index(digit: int, alphabet: Sequence[int]) -> int:
    try:
        return alphabet.index(digit)
    except ValueError:
        raise ValueError(f"digit {digit} is not in alphabet {tuple(alphabet)}") from None


def encode_pattern(digits: Iterable[int], alphabet: Sequence[int]) -> int:
    """Index of a history tail, oldest digit most significant."""
    base = len(alphabet)
    key = 0
    for d in digits:
        key = key * base + digit_index(d, alphabet)
    return key


def decode_pattern(key: int, memory: int, alphabet: Sequence[int]) -> tuple[int, ...]:
    base = len(alphabet)
    out = []
    for _ in range(memory):
        key, r = divmod(key, base)
        out.append(alphabet[r])
    return tuple(reversed(out))


class Strategy:
    """A total lookup table from M-digit history patterns to actions."""

    def __init__(self, actions: Sequence[int] | np.ndarray, memory: int, alphabet: Sequence[int]):
        actions = np.asarray(actions, dtype=np.int8)
        alphabet = tuple(alphabet)
        if actions.shape != (len(alphabet) ** memory,):
            raise ValueError(
                f"expected {len(alphabet) ** memory} actions for memory={memory}, got shape {actions.shape}"
            )
        if not np.isin(actions, (-1, 0, 1)).all():
            raise ValueError("actions must be in {-1, 0, +1}")
        self.actions = actions
        self.memory = memory
        self.alphabet = alphabet

    @classmethod
    def from_mapping(
        cls,
        mapping: dict[tuple[int, ...], int],
        memory: int,
        alphabet: Sequence[int] = QUINARY,
        default: int | None = None,
    ) -> "Strategy":
        """Build a table from explicit rows; ``default`` fills unlisted patterns."""
        n = len(alphabet) ** memory
        if default is None and len(mapping) != n:
            raise ValueError(f"mapping covers {len(mapping)} of {n} patterns and no default was given")
        actions = np.full(n, 0 if default is None else default, dtype=np.int8)
        for pattern, action in mapping.items():
            if len(pattern) != memory:
                raise ValueError(f"pattern {pattern} does not have {memory} digits")
            actions[encode_pattern(pattern, alphabet)] = action
        return cls(actions, memory, alphabet)

    @classmethod
    def from_key(cls, player_key: int, strategy_index: int, memory: int, alphabet: Sequence[int]) -> "Strategy":
        n = len(alphabet) ** memory
        with np.errstate(over="ignore"):
            x = mix64_array(np.uint64(player_key) + np.arange(n, dtype=np.uint64))
        digit = (x // np.uint64(3**strategy_index)) % np.uint64(3)
        return cls(digit.astype(np.int8) - 1, memory, alphabet)

    def __len__(self) -> int:
        return len(self.actions)

    def lookup(self, tail: Sequence[int]) -> int:
        if len(tail) != self.memory:
            raise ValueError(f"history tail must have {self.memory} digits, got {len(tail)}")
        return int(self.actions[encode_pattern(tail, self.alphabet)])

    def lookup_index(self, pattern: int) -> int:
        return int(self.actions[pattern])

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {
            decode_pattern(k, self.memory, self.alphabet): int(a) for k, a in enumerate(self.actions)
        }
