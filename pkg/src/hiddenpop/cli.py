"""Command-line pipeline: simulate -> fit -> analyze, plus SIR screening.

Every subcommand resolves its configuration (defaults, optional key=value
config file, then flags), writes its outputs plus a manifest.json with the
fully resolved settings, and removes partial outputs on failure. Given the
same inputs and seed, the data outputs are byte-identical across runs; the
manifest differs only in its wall-clock fields.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
import zipfile
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    chain_summary,
    coverage_report,
    mape_summary,
    predictive_intervals,
    rho_hat,
    write_coverage_csv,
    write_mape_csv,
    write_summary_csv,
    write_uncaptured_csv,
    _write_rows,
)
from .data import CountPanel, PanelDataset
from .sampler import ChainConfig, PosteriorDraws, PriorConfig, run_chains
from .simulate import (
    DgpConfig,
    lambda_of,
    make_lambda_scenario,
    read_truth_csv,
    simulate,
    write_truth_csv,
)
from .sir import compute_sir, flag_hotspots, score_exceedance, write_sir_csv
from .spatial import SpatialGraph, build_queen_grid, load_adjacency

OUTPUT_ROOT_ENV = "HIDDENPOP_OUTPUT_ROOT"

_DRAWS_SCALARS = ("sigma2_alpha", "sigma2_eps", "sigma2_v", "sigma2_u", "sigma2_eta")


def _out_dir(arg: str | None) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    out = Path(arg) if arg else root
    if not out.is_absolute():
        out = root / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


def save_draws(draws: PosteriorDraws, y: np.ndarray, path) -> None:
    """Persist draws in a compact columnar zip of .npy members.

    Functionally an npz readable by numpy.load, but written with pinned
    zip timestamps so identical draws produce byte-identical files.
    """
    arrays = {
        "beta": draws.beta,
        "u_plus": draws.u_plus,
        "eta_plus": draws.eta_plus,
        "v": draws.v,
        "chain_id": draws.chain_id,
        "y": np.asarray(y, dtype=float),
        "meta": np.array(
            [draws.seed, draws.n_iter, draws.burn_in, draws.thin], dtype=np.int64
        ),
        "avg_row_sum": np.array([draws.avg_row_sum]),
        "accept_rates": np.array([draws.accept_rate_alpha, draws.accept_rate_eps]),
        "floored": np.array([draws.floored_count], dtype=np.int64),
    }
    for name in _DRAWS_SCALARS:
        arrays[name] = getattr(draws, name)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            member = io.BytesIO()
            np.lib.format.write_array(member, np.asanyarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, member.getvalue())
    _atomic_write_bytes(Path(path), buf.getvalue())


def load_draws(path) -> tuple[PosteriorDraws, np.ndarray]:
    """Inverse of save_draws; returns (draws, observed log-scale panel)."""
    with np.load(path) as z:
        meta = z["meta"]
        draws = PosteriorDraws(
            beta=z["beta"], u_plus=z["u_plus"], eta_plus=z["eta_plus"], v=z["v"],
            sigma2_alpha=z["sigma2_alpha"], sigma2_eps=z["sigma2_eps"],
            sigma2_v=z["sigma2_v"], sigma2_u=z["sigma2_u"], sigma2_eta=z["sigma2_eta"],
            seed=int(meta[0]), n_iter=int(meta[1]), burn_in=int(meta[2]),
            thin=int(meta[3]), avg_row_sum=float(z["avg_row_sum"][0]),
            accept_rate_alpha=float(z["accept_rates"][0]),
            accept_rate_eps=float(z["accept_rates"][1]),
            floored_count=int(z["floored"][0]),
            chain_id=z["chain_id"],
        )
        y = z["y"]
    if draws.n_draws == 0:
        raise ValueError(f"{path}: draws file contains no stored draws")
    return draws, y


def export_draws_csv(draws: PosteriorDraws, path) -> None:
    """Scalar parameters per stored draw (slopes and standard deviations)."""
    k = draws.beta.shape[1]
    header = (["draw", "chain"] + [f"beta_{j + 1}" for j in range(k)]
              + [name.replace("sigma2_", "sigma_") for name in _DRAWS_SCALARS])
    rows = []
    for s in range(draws.n_draws):
        row = [s, int(draws.chain_id[s])]
        row += [float(draws.beta[s, j]) for j in range(k)]
        row += [float(np.sqrt(getattr(draws, name)[s])) for name in _DRAWS_SCALARS]
        rows.append(row)
    _write_rows(path, header, rows)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 7x7, got {text!r}") from exc


def _parse_levels(text: str) -> list[float]:
    levels = [float(part) for part in text.split(",") if part]
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise argparse.ArgumentTypeError(f"levels must lie in (0, 1), got {lv}")
    return levels


def _read_config_file(path) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(Path(path).open(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _manifest(out: Path, subcommand: str, config: dict, inputs: dict,
              outputs: list[str], started: float) -> None:
    payload = {
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "package_version": __version__,
        "duration_seconds": round(time.time() - started, 3),
    }
    _atomic_write_bytes(out / "manifest.json",
                        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())


class _OutputTracker:
    """Removes everything this command wrote if it fails midway."""

    def __init__(self, out: Path):
        self.out = out
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        self.written.append(name)
        return self.out / name

    def cleanup(self) -> None:
        for name in self.written:
            try:
                (self.out / name).unlink(missing_ok=True)
            except OSError:
                pass


def _graph_from_args(args, n_regions: int) -> SpatialGraph:
    if args.grid is not None:
        graph = build_queen_grid(*args.grid)
    elif args.adjacency is not None:
        graph = load_adjacency(args.adjacency)
    else:
        raise ValueError("either --grid or --adjacency is required")
    if graph.n_regions != n_regions:
        raise ValueError(
            f"graph has {graph.n_regions} regions but panel has {n_regions}"
        )
    return graph


def cmd_simulate(args) -> int:
    out = _out_dir(args.out)
    tracker = _OutputTracker(out)
    started = time.time()
    try:
        config = DgpConfig(
            grid_rows=args.grid[0], grid_cols=args.grid[1], n_periods=args.periods,
            beta_true=tuple(args.beta), sigma_alpha=args.sigma_alpha,
            sigma_eta=args.sigma_eta, sigma_u=args.sigma_u, sigma_eps=args.sigma_eps,
            sigma_v=args.sigma_v, eps_t_df=args.student_t_df, seed=args.seed,
        )
        if args.target_lambda is not None:
            config = make_lambda_scenario(args.target_lambda, config)
        truth = simulate(config)
        truth.dataset.to_csv(tracker.path("panel.csv"))
        write_truth_csv(truth, tracker.path("truth.csv"))
        resolved = {**config.__dict__, "beta_true": list(config.beta_true),
                    "lambda": lambda_of(config)}
        _manifest(out, "simulate", resolved, {}, tracker.written, started)
    except Exception:
        tracker.cleanup()
        raise
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args.out)
    tracker = _OutputTracker(out)
    started = time.time()
    try:
        overrides = _read_config_file(args.config) if args.config else {}

        def setting(name, flag_value, cast, default):
            if flag_value is not None:
                return flag_value
            if name in overrides:
                raw = overrides[name]
                if cast is bool:
                    return raw.lower() in ("1", "true", "yes", "on")
                return cast(raw)
            return default

        chain = ChainConfig(
            n_iter=setting("iters", args.iters, int, 20000),
            burn_in=setting("burnin", args.burnin, int, 10000),
            thin=setting("thin", args.thin, int, 5),
            seed=setting("seed", args.seed, int, 0),
            center_car=args.center_car or setting("center_car", None, bool, False),
            car_df=setting("car_df", args.car_df, int, None),
            stabilize=(not args.no_stabilize) and setting("stabilize", None, bool, True),
            mh_step_scale_alpha=setting("mh_step_scale_alpha", args.mh_step_alpha,
                                        float, 0.25),
            mh_step_scale_eps=setting("mh_step_scale_eps", args.mh_step_eps,
                                      float, 0.4),
        )
        n_chains = setting("chains", args.chains, int, 1)

        data = PanelDataset.from_csv(args.data)
        graph = _graph_from_args(args, data.n_regions)
        draws = run_chains(data, graph, PriorConfig(), chain, n_chains=n_chains)

        save_draws(draws, data.y, tracker.path("draws.npz"))
        write_summary_csv(chain_summary(draws), tracker.path("summary.csv"))
        _write_rows(tracker.path("acceptance.csv"),
                    ["quantity", "value"],
                    [["accept_rate_alpha", draws.accept_rate_alpha],
                     ["accept_rate_eps", draws.accept_rate_eps],
                     ["floored_draws", draws.floored_count],
                     ["stored_draws", draws.n_draws]])
        if args.export_csv:
            export_draws_csv(draws, tracker.path("draws.csv"))

        resolved = {**chain.__dict__, "chains": n_chains}
        graph_desc = (f"grid:{args.grid[0]}x{args.grid[1]}" if args.grid
                      else str(args.adjacency))
        _manifest(out, "fit", resolved,
                  {"data": str(args.data), "graph": graph_desc},
                  tracker.written, started)
    except Exception:
        tracker.cleanup()
        raise
    return 0


def cmd_analyze(args) -> int:
    out = _out_dir(args.out)
    tracker = _OutputTracker(out)
    started = time.time()
    try:
        draws, y_log = load_draws(args.draws)
        y_level = np.exp(y_log)
        levels = args.levels
        if args.truth is None and levels is not None:
            raise ValueError("coverage levels were requested but no --truth file given")
        group = "region" if args.by_region else ("period" if args.by_period else None)

        n, t = y_level.shape
        regions = np.arange(n)
        times = np.arange(t)
        write_uncaptured_csv(draws, regions, times, tracker.path("uncaptured.csv"), group)

        if args.truth is not None:
            truth = read_truth_csv(args.truth)
            if truth["p"].shape != y_level.shape:
                raise ValueError(
                    f"truth grid {truth['p'].shape} does not match draws {y_level.shape}"
                )
            levels = levels if levels is not None else [0.90, 0.95, 0.99]
            rng = np.random.default_rng(args.seed)
            reports = []
            for level in levels:
                _, lo, hi = predictive_intervals(draws, y_level, level)
                reports.append(coverage_report(lo, hi, truth["p"], level,
                                               n_beta_draws=args.beta_draws, rng=rng))
            write_coverage_csv(reports, tracker.path("coverage.csv"))
            summaries = [mape_summary(draws, y_level, truth["p"], per_draw=False)]
            if args.per_draw_mape:
                summaries.append(mape_summary(draws, y_level, truth["p"], per_draw=True))
            write_mape_csv(summaries, tracker.path("mape.csv"))
            _write_rows(tracker.path("rho.csv"), ["component", "rho_hat"],
                        [["eta_plus", rho_hat(draws.eta_plus, truth["eta_plus"])],
                         ["u_plus", rho_hat(draws.u_plus.reshape(draws.n_draws, -1),
                                            truth["u_plus"].ravel())],
                         ["v", rho_hat(draws.v, truth["v"])]])

        resolved = {"levels": levels, "group_by": group,
                    "beta_draws": args.beta_draws,
                    "per_draw_mape": bool(args.per_draw_mape), "seed": args.seed}
        _manifest(out, "analyze", resolved,
                  {"draws": str(args.draws),
                   "truth": str(args.truth) if args.truth else None},
                  tracker.written, started)
    except Exception:
        tracker.cleanup()
        raise
    return 0


def cmd_sir(args) -> int:
    out = _out_dir(args.out)
    tracker = _OutputTracker(out)
    started = time.time()
    try:
        panel = CountPanel.from_csv(args.counts)
        table = score_exceedance(compute_sir(panel), nu=args.nu, alpha=args.alpha)
        tiers = flag_hotspots(table, tuple(args.thresholds))
        write_sir_csv(table, tiers, tracker.path("sir.csv"))
        resolved = {"nu": args.nu, "alpha": args.alpha,
                    "thresholds": list(args.thresholds)}
        _manifest(out, "sir", resolved, {"counts": str(args.counts)},
                  tracker.written, started)
    except Exception:
        tracker.cleanup()
        raise
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiddenpop",
        description="Bayesian spatial panel frontier model for hidden-population inference",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel plus truth sidecar")
    p_sim.add_argument("--grid", type=_parse_grid, default=(7, 7), metavar="RxC")
    p_sim.add_argument("--periods", type=int, default=5)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--beta", type=float, nargs=2, default=[0.5, -0.5],
                       metavar=("B1", "B2"))
    p_sim.add_argument("--sigma-alpha", type=float, default=0.1)
    p_sim.add_argument("--sigma-eta", type=float, default=0.5)
    p_sim.add_argument("--sigma-u", type=float, default=0.2)
    p_sim.add_argument("--sigma-eps", type=float, default=0.1)
    p_sim.add_argument("--sigma-v", type=float, default=0.4)
    p_sim.add_argument("--lambda", dest="target_lambda", type=float, default=None,
                       help="rescale sigma-eps to hit this signal ratio")
    p_sim.add_argument("--student-t-df", type=float, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run the Gibbs sampler on a panel CSV")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--grid", type=_parse_grid, default=None, metavar="RxC")
    p_fit.add_argument("--adjacency", default=None)
    p_fit.add_argument("--iters", type=int, default=None)
    p_fit.add_argument("--burnin", type=int, default=None)
    p_fit.add_argument("--thin", type=int, default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--center-car", action="store_true")
    p_fit.add_argument("--car-df", type=int, default=None)
    p_fit.add_argument("--no-stabilize", action="store_true",
                       help="disable the decomposition guards and level move")
    p_fit.add_argument("--mh-step-alpha", type=float, default=None)
    p_fit.add_argument("--mh-step-eps", type=float, default=None)
    p_fit.add_argument("--config", default=None, help="key=value settings file")
    p_fit.add_argument("--export-csv", action="store_true")
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_an = sub.add_parser("analyze", help="coverage, MAPE and uncaptured summaries")
    p_an.add_argument("--draws", required=True)
    p_an.add_argument("--truth", default=None)
    p_an.add_argument("--levels", type=_parse_levels, default=None,
                      metavar="L1,L2,...")
    p_an.add_argument("--beta-draws", type=int, default=20000)
    p_an.add_argument("--per-draw-mape", action="store_true")
    p_an.add_argument("--by-region", action="store_true")
    p_an.add_argument("--by-period", action="store_true")
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=cmd_analyze)

    p_sir = sub.add_parser("sir", help="standardized incidence ratio screening")
    p_sir.add_argument("--counts", required=True)
    p_sir.add_argument("--thresholds", type=_parse_levels, default=[0.90, 0.95, 0.99])
    p_sir.add_argument("--nu", type=float, default=0.01)
    p_sir.add_argument("--alpha", type=float, default=0.01)
    p_sir.add_argument("--out", default=None)
    p_sir.set_defaults(func=cmd_sir)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
