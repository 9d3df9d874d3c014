"""Price trajectories and their on-disk formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Iterator

import numpy as np

if TYPE_CHECKING:
    from .config import GameConfig
    from .engine import StepRecord

CSV_HEADER = ("t", "price", "dp", "imbalance", "perturbation", "h", "volume")


class SeriesFormatError(ValueError):
    """Raised for unreadable trajectory files; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class PriceSeries:
    """Price path ``prices[0] = p(0)`` through ``prices[T] = p(T)``.

    The per-step columns (length T) are present for engine output and may be
    None for a bare price path loaded from elsewhere.
    """

    prices: np.ndarray
    price_change: np.ndarray | None = None
    imbalance: np.ndarray | None = None
    perturbation: np.ndarray | None = None
    quantized_move: np.ndarray | None = None
    volume: np.ndarray | None = None
    config: "GameConfig | None" = None

    def __post_init__(self) -> None:
        self.prices = np.asarray(self.prices, dtype=float)
        if self.prices.ndim != 1 or len(self.prices) == 0:
            raise ValueError("prices must be a non-empty 1-d sequence")
        if not np.isfinite(self.prices).all():
            raise ValueError("prices contain missing or non-finite values")

    def __len__(self) -> int:
        return len(self.prices)

    @property
    def horizon(self) -> int:
        return len(self.prices) - 1

    @property
    def has_records(self) -> bool:
        return self.price_change is not None

    @classmethod
    def from_records(
        cls, records: Iterable["StepRecord"], initial_price: float, config: "GameConfig | None" = None
    ) -> "PriceSeries":
        records = list(records)
        return cls(
            prices=np.array([initial_price] + [r.price for r in records], dtype=float),
            price_change=np.array([r.price_change for r in records], dtype=float),
            imbalance=np.array([r.speculative_imbalance for r in records], dtype=float),
            perturbation=np.array([r.perturbation_draw for r in records], dtype=float),
            quantized_move=np.array([r.quantized_move for r in records], dtype=np.int64),
            volume=np.array([r.traded_volume for r in records], dtype=np.int64),
            config=config,
        )

    def records(self) -> Iterator["StepRecord"]:
        from .engine import StepRecord

        self._require_records()
        for t in range(self.horizon):
            yield StepRecord(
                time=t + 1,
                price=float(self.prices[t + 1]),
                price_change=float(self.price_change[t]),
                speculative_imbalance=float(self.imbalance[t]),
                perturbation_draw=float(self.perturbation[t]),
                quantized_move=int(self.quantized_move[t]),
                traded_volume=int(self.volume[t]),
            )

    def _require_records(self) -> None:
        if not self.has_records:
            raise ValueError("series carries prices only, no per-step records")

    def same_as(self, other: "PriceSeries") -> bool:
        """Bitwise equality of every column."""
        cols = ("prices", "price_change", "imbalance", "perturbation", "quantized_move", "volume")
        for name in cols:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or a.tobytes() != b.tobytes()):
                return False
        return True

    # -- files ---------------------------------------------------------------

    def _rows(self) -> Iterator[tuple[Any, ...]]:
        self._require_records()
        for t in range(self.horizon):
            yield (
                t + 1,
                repr(float(self.prices[t + 1])),
                repr(float(self.price_change[t])),
                repr(float(self.imbalance[t])),
                repr(float(self.perturbation[t])),
                int(self.quantized_move[t]),
                int(self.volume[t]),
            )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(self._rows())

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for row in self._rows():
                rec = dict(zip(CSV_HEADER, row))
                for k in ("price", "dp", "imbalance", "perturbation"):
                    rec[k] = float(rec[k])
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "PriceSeries":
        """Read engine CSV output, or any CSV with at least a ``price`` column.

        For engine output p(0) is recovered as ``price - dp`` of the first row.
        A bare ``price`` column is taken as the full path including p(0).
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SeriesFormatError("empty file", line=1) from None
            header = [h.strip() for h in header]
            if "price" not in header:
                raise SeriesFormatError(f"no 'price' column in header {header}", line=1)
            full = tuple(header[: len(CSV_HEADER)]) == CSV_HEADER
            idx = {name: header.index(name) for name in header}
            columns: dict[str, list[float]] = {name: [] for name in (CSV_HEADER if full else ("price",))}
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise SeriesFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
                for name in columns:
                    try:
                        value = float(row[idx[name]])
                    except ValueError:
                        raise SeriesFormatError(f"bad {name} value {row[idx[name]]!r}", line=lineno) from None
                    if not np.isfinite(value):
                        raise SeriesFormatError(f"non-finite {name} value", line=lineno)
                    columns[name].append(value)
        if not full:
            return cls(prices=np.array(columns["price"]))
        if not columns["price"]:
            raise SeriesFormatError("no data rows", line=2)
        price = np.array(columns["price"])
        dp = np.array(columns["dp"])
        p0 = price[0] - dp[0]
        return cls(
            prices=np.concatenate([[p0], price]),
            price_change=dp,
            imbalance=np.array(columns["imbalance"]),
            perturbation=np.array(columns["perturbation"]),
            quantized_move=np.array(columns["h"], dtype=np.int64),
            volume=np.array(columns["volume"], dtype=np.int64),
        )
