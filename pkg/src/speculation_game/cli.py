"""Command-line entry point: ``specgame {simulate,analyze,sweep,figures}``.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import analysis, experiments
from .config import ConfigError, GameConfig
from .engine import run
from .series import PriceSeries, SeriesFormatError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

log = logging.getLogger("speculation_game")

# flag -> GameConfig field
GAME_FLAGS = {
    "n_players": int,
    "memory": int,
    "n_strategies": int,
    "board_lot": int,
    "cognitive_threshold": float,
    "perturbation": float,
    "horizon": int,
    "initial_price": float,
    "rng_seed": int,
    "idle_rule": str,
}


def _add_game_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (GameConfig keys, or an experiment file with a 'game' block)")
    g = p.add_argument_group("model parameters (override the config file)")
    g.add_argument("--n-players", type=int)
    g.add_argument("--memory", type=int)
    g.add_argument("--n-strategies", type=int)
    g.add_argument("--board-lot", type=int)
    g.add_argument("--cognitive-threshold", type=float)
    g.add_argument("--pb", "--perturbation", dest="perturbation", type=float)
    g.add_argument("--horizon", type=int)
    g.add_argument("--initial-price", type=float)
    g.add_argument("--idle-rule", choices=("hold", "close"))
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")


def _load_json(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _game_config(args: argparse.Namespace, file_data: dict[str, Any], seed_key: str = "rng_seed") -> GameConfig:
    game = dict(file_data["game"]) if "game" in file_data else dict(file_data)
    for key in ("n_trials", "pb_grid", "master_seed", "output_dir", "workers"):
        game.pop(key, None)
    for name in GAME_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            game[name] = value
    if seed_key == "rng_seed" and getattr(args, "seed", None) is not None:
        game["rng_seed"] = args.seed
    return GameConfig.from_dict(game)


def _experiment_spec(args: argparse.Namespace) -> experiments.ExperimentSpec:
    data = _load_json(args.config)
    game = _game_config(args, data, seed_key="master_seed")
    fields: dict[str, Any] = {k: data[k] for k in ("n_trials", "pb_grid", "master_seed", "output_dir", "workers") if k in data}
    if args.trials is not None:
        fields["n_trials"] = args.trials
    if getattr(args, "pb_grid", None) is not None:
        fields["pb_grid"] = args.pb_grid
    if args.seed is not None:
        fields["master_seed"] = args.seed
    if args.out is not None:
        fields["output_dir"] = str(args.out)
    if args.workers is not None:
        fields["workers"] = args.workers
    if "pb_grid" in fields:
        fields["pb_grid"] = tuple(float(x) for x in fields["pb_grid"])
    return experiments.ExperimentSpec(base_config=game, **fields)


def _pb_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _game_config(args, _load_json(args.config))
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    series = run(config)
    if args.format == "jsonl":
        series.to_jsonl(out)
    else:
        series.to_csv(out)
    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.rng_seed,
        "version": experiments.version_string(),
        "format": args.format,
        "rows": series.horizon,
        "file": out.name,
    }
    meta_path = out.with_name(out.stem + ".meta.json")
    experiments.write_json(meta_path, meta)
    log.info("wrote %s and %s", out, meta_path)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    series_list = [PriceSeries.from_csv(p) for p in args.inputs]
    for path, s in zip(args.inputs, series_list):
        if len(s) < 2:
            raise analysis.AnalysisError(f"{path}: series too short ({len(s)} price point(s))")
    length = min(len(s) for s in series_list)
    taus = np.asarray(args.taus, dtype=np.int64) if args.taus else analysis.default_tau_grid(length)
    if len(taus) == 0:
        raise analysis.AnalysisError(f"series too short for any tau (length {length})")
    tables = [(taus, analysis.sigma_profile(s, taus)) for s in series_list]
    taus, sigmas = analysis.average_sigma_across_trials(tables)
    fit = analysis.fit_power_law(taus, sigmas)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    experiments.write_csv(out / "tau_sigma.csv", ("tau", "sigma"), zip(taus, sigmas))
    summary: dict[str, Any] = {**fit.summary(), "n_series": len(series_list), "inputs": [str(p) for p in args.inputs]}

    r = np.concatenate([analysis.returns(s, 1) for s in series_list])
    first = analysis.returns(series_list[0], 1)
    max_lag = min(args.max_lag, len(first) - 2)
    if max_lag >= 1 and np.ptp(first) > 0:
        ret_acf = analysis.acf(first, max_lag)
        abs_acf = analysis.acf(np.abs(first), max_lag) if np.ptp(np.abs(first)) > 0 else None
        experiments.write_csv(out / "acf_returns.csv", ("lag", "acf"), zip(ret_acf.lags, ret_acf.values))
        if abs_acf is not None:
            experiments.write_csv(out / "acf_abs_returns.csv", ("lag", "acf"), zip(abs_acf.lags, abs_acf.values))
        summary["white_noise_band"] = analysis.white_noise_band(len(first))
    horizons = [h for h in args.horizons if len(series_list[0]) // h >= 5]
    kurt_rows = []
    for h in horizons:
        try:
            kurt_rows.append((h, analysis.excess_kurtosis(np.concatenate([analysis.returns(s, h) for s in series_list]))))
        except analysis.AnalysisError:
            continue
    experiments.write_csv(out / "kurtosis.csv", ("horizon", "excess_kurtosis"), kurt_rows)
    if len(r) >= 4 and np.ptp(r) > 0:
        hist = analysis.return_histogram(r, experiments.HIST_BINS, experiments.HIST_WIDTH_SD)
        experiments.write_csv(out / "histogram.csv", ("bin_center", "density"), zip(hist.bin_centers, hist.densities))
        summary["excess_kurtosis"] = hist.excess_kurtosis
    experiments.write_json(out / "fit.json", summary)
    print(f"H = {fit.hurst:.4f}  intercept = {fit.intercept:.4f}  R^2 = {fit.r_squared:.4f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = _experiment_spec(args)
    if args.print_config:
        print(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    result = experiments.sweep_pb(spec)
    experiments.write_sweep(result, spec.output_dir)
    for row in result.rows():
        print(f"Pb={row['pb']:<6g} H={row['hurst']:.4f} R^2={row['r2']:.4f} kurtosis={row['excess_kurtosis']:.3f}")
    return EXIT_OK


def cmd_figures(args: argparse.Namespace) -> int:
    spec = _experiment_spec(args)
    if args.print_config:
        print(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    bundle = experiments.reproduce_figures(spec)
    files = experiments.emit_figure_data(bundle, spec.output_dir)
    for f in files:
        print(f)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specgame", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one game and write its per-step records")
    _add_game_flags(p)
    p.add_argument("--seed", "--rng-seed", dest="seed", type=int)
    p.add_argument("--output", "-o", default="run.csv", help="output file (metadata goes to <stem>.meta.json)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="Hurst fit and stylized-fact diagnostics for price CSVs")
    p.add_argument("inputs", nargs="+", type=Path, help="engine CSV files; several are treated as one ensemble")
    p.add_argument("--out", type=Path, default=Path("analysis"))
    p.add_argument("--taus", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated tau grid")
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--horizons", type=lambda s: [int(x) for x in s.split(",")], default=[1, 10, 100])
    p.set_defaults(func=cmd_analyze)

    for name, func, help_text in (
        ("sweep", cmd_sweep, "ensembles over a grid of perturbation strengths"),
        ("figures", cmd_figures, "write the data behind all six figures"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_game_flags(p)
        p.add_argument("--seed", "--master-seed", dest="seed", type=int)
        p.add_argument("--trials", type=int, help=f"trials per ensemble (default {experiments.DEFAULT_TRIALS})")
        p.add_argument("--out", "--output", dest="out", type=Path)
        p.add_argument("--workers", type=int)
        if name == "sweep":
            p.add_argument("--pb-grid", type=_pb_grid)
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SeriesFormatError, analysis.AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
