"""Seeded ensembles, perturbation sweeps and figure data files.

Trial ``i`` of an ensemble runs with ``rng_seed = master_seed + i``.  Trials
are independent; with ``workers > 1`` they run in a process pool and are
collected in trial order, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import analysis
from .config import ConfigError, GameConfig, stable_hash
from .engine import run
from .series import PriceSeries

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 100
FIG6_PB_GRID = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
FIG5_PB_GRID = (0.25, 0.5, 0.75)
HIST_BINS = 101
HIST_WIDTH_SD = 6.0


@dataclass(frozen=True)
class ExperimentSpec:
    base_config: GameConfig = field(default_factory=GameConfig)
    n_trials: int = DEFAULT_TRIALS
    pb_grid: tuple[float, ...] = FIG6_PB_GRID
    master_seed: int = 0
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if not self.pb_grid:
            raise ConfigError("pb_grid must not be empty")
        grid = tuple(float(x) for x in self.pb_grid)
        if any(x < 0 for x in grid):
            raise ConfigError(f"pb_grid values must be >= 0, got {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"pb_grid must be strictly ascending, got {grid}")
        object.__setattr__(self, "pb_grid", grid)
        if not (0 <= self.master_seed and self.master_seed + self.n_trials <= 2**64):
            raise ConfigError("master_seed + n_trials must fit in 64 bits")

    def seeds(self) -> list[int]:
        return trial_seeds(self.master_seed, self.n_trials)

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": self.base_config.to_dict(),
            "n_trials": self.n_trials,
            "pb_grid": list(self.pb_grid),
            "master_seed": self.master_seed,
            "output_dir": str(self.output_dir),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentSpec":
        data = dict(data)
        known = {"game", "n_trials", "pb_grid", "master_seed", "output_dir", "workers"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        game = GameConfig.from_dict(data.pop("game", {}))
        if "pb_grid" in data:
            data["pb_grid"] = tuple(data["pb_grid"])
        return cls(base_config=game, **data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def trial_seeds(master_seed: int, n_trials: int) -> list[int]:
    return [master_seed + i for i in range(n_trials)]


@dataclass
class TrialResult:
    seed: int
    sigmas: np.ndarray
    hurst: float
    r_squared: float
    excess_kurtosis: float
    max_abs_deviation: float
    returns: np.ndarray
    series: PriceSeries | None = None


@dataclass
class EnsembleResult:
    config: GameConfig
    seeds: list[int]
    taus: np.ndarray
    trials: list[TrialResult]
    fit: analysis.HurstFit
    histogram: analysis.TailStats

    @property
    def sigma_table(self) -> np.ndarray:
        return np.array([t.sigmas for t in self.trials])

    @property
    def mean_sigmas(self) -> np.ndarray:
        return self.sigma_table.mean(axis=0)

    @property
    def hurst(self) -> float:
        return self.fit.hurst

    @property
    def r_squared(self) -> float:
        return self.fit.r_squared

    @property
    def trial_hurst(self) -> np.ndarray:
        return np.array([t.hurst for t in self.trials])

    @property
    def hurst_standard_error(self) -> float:
        h = self.trial_hurst
        return float(h.std(ddof=1) / np.sqrt(len(h))) if len(h) > 1 else float("nan")

    @property
    def excess_kurtosis(self) -> float:
        """Trial-averaged excess kurtosis of one-step returns."""
        return float(np.mean([t.excess_kurtosis for t in self.trials]))

    @property
    def max_abs_deviation(self) -> float:
        return float(np.mean([t.max_abs_deviation for t in self.trials]))

    def summary(self) -> dict[str, Any]:
        return {
            "pb": self.config.perturbation,
            "n_trials": len(self.trials),
            "hurst": self.hurst,
            "intercept": self.fit.intercept,
            "r2": self.r_squared,
            "hurst_se": self.hurst_standard_error,
            "excess_kurtosis": self.excess_kurtosis,
            "max_abs_deviation": self.max_abs_deviation,
        }


def _run_trial(config: GameConfig, taus: np.ndarray, keep_series: bool) -> TrialResult:
    series = run(config)
    sigmas = analysis.sigma_profile(series, taus)
    try:
        fit = analysis.fit_power_law(taus, sigmas)
        h, r2 = fit.hurst, fit.r_squared
    except analysis.AnalysisError:
        h, r2 = float("nan"), float("nan")
    r = analysis.returns(series, 1)
    try:
        kurt = analysis.excess_kurtosis(r)
    except analysis.AnalysisError:
        kurt = float("nan")
    return TrialResult(
        seed=config.rng_seed,
        sigmas=sigmas,
        hurst=h,
        r_squared=r2,
        excess_kurtosis=kurt,
        max_abs_deviation=float(np.max(np.abs(series.prices - config.initial_price))),
        returns=r,
        series=series if keep_series else None,
    )


def _map_trials(configs: Sequence[GameConfig], taus: np.ndarray, keep_series: bool, workers: int) -> list[TrialResult]:
    if workers <= 1 or len(configs) == 1:
        return [_run_trial(c, taus, keep_series) for c in configs]
    n = len(configs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, configs, [taus] * n, [keep_series] * n))


def run_ensemble(
    config: GameConfig,
    n_trials: int,
    master_seed: int,
    taus: Sequence[int] | None = None,
    workers: int = 1,
    keep_series: bool = True,
) -> EnsembleResult:
    """Run ``n_trials`` seeded games, average sigma(tau) over trials, then fit."""
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    seeds = trial_seeds(master_seed, n_trials)
    taus = analysis.default_tau_grid(config.horizon + 1) if taus is None else np.asarray(taus, dtype=np.int64)
    configs = [config.replace(rng_seed=s) for s in seeds]
    log.info("ensemble pb=%g: %d trials from seed %d", config.perturbation, n_trials, master_seed)
    trials = _map_trials(configs, taus, keep_series, workers)
    taus, mean_sigmas = analysis.average_sigma_across_trials([(taus, t.sigmas) for t in trials])
    fit = analysis.fit_power_law(taus, mean_sigmas)
    pooled = np.concatenate([t.returns for t in trials])
    histogram = analysis.return_histogram(pooled, HIST_BINS, HIST_WIDTH_SD)
    if not keep_series:
        for t in trials:
            t.returns = np.empty(0)
    return EnsembleResult(config=config, seeds=seeds, taus=taus, trials=trials, fit=fit, histogram=histogram)


@dataclass
class SweepResult:
    spec: ExperimentSpec
    entries: dict[float, EnsembleResult]

    def rows(self) -> list[dict[str, Any]]:
        return [self.entries[pb].summary() for pb in self.spec.pb_grid]

    @property
    def hursts(self) -> np.ndarray:
        return np.array([self.entries[pb].hurst for pb in self.spec.pb_grid])


def sweep_pb(spec: ExperimentSpec, keep_series: bool = False) -> SweepResult:
    """One ensemble per perturbation level, all sharing the same trial seeds."""
    entries = {}
    for pb in spec.pb_grid:
        config = spec.base_config.replace(perturbation=pb)
        entries[pb] = run_ensemble(
            config, spec.n_trials, spec.master_seed, workers=spec.workers, keep_series=keep_series
        )
    return SweepResult(spec=spec, entries=entries)


# -- files ------------------------------------------------------------------


def _fmt(x: Any) -> Any:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, obj: Any) -> Path:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def version_string() -> str:
    from . import __version__

    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--tags", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, files: Sequence[Path], payload: dict[str, Any]) -> Path:
    manifest = dict(payload)
    manifest["version"] = version_string()
    manifest["files"] = {p.name: _sha256(p) for p in sorted(files, key=lambda p: p.name)}
    return write_json(out_dir / "manifest.json", manifest)


def _prepare_dir(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not out.is_dir():
        raise NotADirectoryError(f"output path {out} is not a directory")
    return out


def _pb_label(pb: float) -> str:
    return f"{pb:g}".replace(".", "p")


def write_sweep(result: SweepResult, out_dir: str | Path) -> list[Path]:
    """``sweep.csv`` (one row per Pb), per-Pb histograms, and a manifest."""
    out = _prepare_dir(out_dir)
    rows = result.rows()
    files = [
        write_csv(
            out / "sweep.csv",
            ("pb", "hurst", "r2", "excess_kurtosis", "hurst_se", "n_trials"),
            [(r["pb"], r["hurst"], r["r2"], r["excess_kurtosis"], r["hurst_se"], r["n_trials"]) for r in rows],
        )
    ]
    for pb in result.spec.pb_grid:
        e = result.entries[pb]
        files.append(write_csv(out / f"sigma_pb{_pb_label(pb)}.csv", ("tau", "sigma"), zip(e.taus, e.mean_sigmas)))
        hist = e.histogram
        files.append(
            write_csv(out / f"hist_pb{_pb_label(pb)}.csv", ("bin_center", "density"), zip(hist.bin_centers, hist.densities))
        )
    spec = result.spec
    files.append(
        write_manifest(
            out,
            files,
            {
                "kind": "sweep",
                "spec": spec.to_dict(),
                "config_hash": stable_hash(spec.to_dict()),
                "seeds": spec.seeds(),
                "seed_rule": "rng_seed = master_seed + trial_index",
                "n_trials": spec.n_trials,
            },
        )
    )
    return files


@dataclass
class FigureBundle:
    spec: ExperimentSpec
    sweep: SweepResult
    baseline_path: PriceSeries
    perturbed_path: PriceSeries
    perturbed_pb: float
    tail_pbs: tuple[float, ...]


def reproduce_figures(
    spec: ExperimentSpec, perturbed_pb: float = 0.25, tail_pbs: Sequence[float] = FIG5_PB_GRID
) -> FigureBundle:
    """Run everything the six figures need in one sweep.

    The sweep grid is the union of ``spec.pb_grid``, 0, ``perturbed_pb`` and
    ``tail_pbs``; trajectories for the price-path figures come from trial 0.
    """
    grid = tuple(sorted(set(spec.pb_grid) | {0.0, float(perturbed_pb)} | {float(x) for x in tail_pbs}))
    full = ExperimentSpec(
        base_config=spec.base_config,
        n_trials=spec.n_trials,
        pb_grid=grid,
        master_seed=spec.master_seed,
        output_dir=spec.output_dir,
        workers=spec.workers,
    )
    result = sweep_pb(full)
    base = spec.base_config.replace(rng_seed=spec.master_seed)
    return FigureBundle(
        spec=full,
        sweep=result,
        baseline_path=run(base.replace(perturbation=0.0)),
        perturbed_path=run(base.replace(perturbation=float(perturbed_pb))),
        perturbed_pb=float(perturbed_pb),
        tail_pbs=tuple(float(x) for x in tail_pbs),
    )


def _sigma_rows(e: EnsembleResult) -> Iterable[tuple[Any, ...]]:
    fitted = e.fit.predict(e.taus)
    return zip(e.taus, e.mean_sigmas, fitted)


def emit_figure_data(bundle: FigureBundle, out_dir: str | Path) -> list[Path]:
    """Write fig1.csv ... fig6.csv, fits.json and manifest.json."""
    out = _prepare_dir(out_dir)
    entries = bundle.sweep.entries
    base, pert = entries[0.0], entries[bundle.perturbed_pb]
    files = [
        write_csv(out / "fig1.csv", ("t", "price"), enumerate(bundle.baseline_path.prices)),
        write_csv(out / "fig2.csv", ("tau", "sigma", "fitted"), _sigma_rows(base)),
        write_csv(out / "fig3.csv", ("t", "price"), enumerate(bundle.perturbed_path.prices)),
        write_csv(out / "fig4.csv", ("tau", "sigma", "fitted"), _sigma_rows(pert)),
        write_csv(
            out / "fig5.csv",
            ("pb", "bin_center", "density"),
            [
                (pb, c, d)
                for pb in bundle.tail_pbs
                for c, d in zip(entries[pb].histogram.bin_centers, entries[pb].histogram.densities)
            ],
        ),
        write_csv(
            out / "fig6.csv",
            ("pb", "hurst", "r2", "hurst_se"),
            [(pb, entries[pb].hurst, entries[pb].r_squared, entries[pb].hurst_standard_error) for pb in bundle.spec.pb_grid],
        ),
    ]
    fits = {
        "fig2": {**base.fit.summary(), "pb": 0.0},
        "fig4": {**pert.fit.summary(), "pb": bundle.perturbed_pb},
        "sweep": bundle.sweep.rows(),
    }
    files.append(write_json(out / "fits.json", fits))
    spec = bundle.spec
    files.append(
        write_manifest(
            out,
            files,
            {
                "kind": "figures",
                "spec": spec.to_dict(),
                "config_hash": stable_hash(spec.to_dict()),
                "seeds": spec.seeds(),
                "seed_rule": "rng_seed = master_seed + trial_index",
                "n_trials": spec.n_trials,
                "trajectory_seed": spec.master_seed,
            },
        )
    )
    return files
