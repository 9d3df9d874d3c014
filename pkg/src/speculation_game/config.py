"""Model parameters for a single game run."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

# 3**40 < 2**64: every strategy reads its own base-3 digit of one 64-bit hash.
MAX_STRATEGIES = 40

IDLE_RULES = ("close", "hold")


class ConfigError(ValueError):
    """Raised when a configuration violates a model invariant."""


@dataclass(frozen=True)
class GameConfig:
    """Parameters of the extended speculation game.

    ``perturbation`` is the half-width of the uniform noise added to every
    price change; 0 gives the unperturbed game.  ``idle_rule`` controls what
    an open position does on a 0 ("idle") recommendation: ``"close"`` flattens
    it, ``"hold"`` keeps it open.
    """

    n_players: int = 1000
    memory: int = 5
    n_strategies: int = 2
    board_lot: int = 9
    cognitive_threshold: float = 3.0
    perturbation: float = 0.0
    horizon: int = 50_000
    initial_price: float = 100.0
    rng_seed: int = 0
    idle_rule: str = "hold"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("n_players", "memory", "n_strategies", "board_lot"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if isinstance(self.horizon, bool) or not isinstance(self.horizon, int):
            raise ConfigError(f"horizon must be an integer, got {self.horizon!r}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if self.n_strategies > MAX_STRATEGIES:
            raise ConfigError(f"n_strategies must be <= {MAX_STRATEGIES}, got {self.n_strategies}")
        if not self.cognitive_threshold > 0:
            raise ConfigError(f"cognitive_threshold must be > 0, got {self.cognitive_threshold}")
        if not self.perturbation >= 0:
            raise ConfigError(f"perturbation must be >= 0, got {self.perturbation}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError(f"rng_seed must fit in 64 bits, got {self.rng_seed}")
        if self.idle_rule not in IDLE_RULES:
            raise ConfigError(f"idle_rule must be one of {IDLE_RULES}, got {self.idle_rule!r}")
        if len(self.alphabet) ** self.memory >= 2**62:
            raise ConfigError(f"memory={self.memory} is too long for a 64-bit history key")
        if self.board_lot > 100:
            warnings.warn(
                "board_lot > 100: initial wealth range is dominated by the board lot",
                stacklevel=3,
            )

    @property
    def alphabet(self) -> tuple[int, ...]:
        """Digits a quantized move can take; 0 is unreachable under perturbation."""
        return (-2, -1, 1, 2) if self.perturbation > 0 else (-2, -1, 0, 1, 2)

    @property
    def n_patterns(self) -> int:
        return len(self.alphabet) ** self.memory

    def replace(self, **changes: Any) -> "GameConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GameConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("cognitive_threshold", "perturbation", "initial_price"):
            if name in kwargs:
                kwargs[name] = float(kwargs[name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "GameConfig":
        with open(path) as fh:
            data = json.load(fh)
        if "game" in data and isinstance(data["game"], dict):
            data = data["game"]
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """Short stable digest of the parameters, for manifests."""
        return stable_hash(self.to_dict())


def stable_hash(obj: Any) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
