"""Everything derived from stored posterior draws.

Highest-density intervals, hidden-population predictive intervals and
their Beta-Binomial coverage, MAPE of the point estimates against
simulated truth, per-draw correlation diagnostics, and the uncaptured
percentage / signal-ratio summaries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FLOAT_FMT
from .sampler import PosteriorDraws

MIN_HDI_DRAWS = 100


def hdi(draws, level: float) -> tuple[float, float]:
    """Shortest contiguous interval holding at least `level` of the draws.

    Sorted-window search: with S draws the window spans ceil(level*S) + 1
    order statistics, ties broken toward the smallest lower endpoint.
    """
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    s = x.size
    if s < MIN_HDI_DRAWS:
        raise ValueError(f"need at least {MIN_HDI_DRAWS} draws for an HDI, got {s}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    m = int(np.ceil(level * s))
    if m >= s:
        return float(x[0]), float(x[-1])
    widths = x[m:] - x[:-m]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m])


def _hdi_unchecked(values, level: float) -> tuple[float, float]:
    """Shortest-window interval without the posterior-sample-size guard;
    for summaries across cells, where few cells is legitimate."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    s = x.size
    m = int(np.ceil(level * s))
    if m >= s:
        return float(x[0]), float(x[-1])
    widths = x[m:] - x[:-m]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m])


def _hdi_columns(sorted_cols: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised HDI over columns of a (draws x cells) pre-sorted matrix."""
    s = sorted_cols.shape[0]
    m = int(np.ceil(level * s))
    if m >= s:
        return sorted_cols[0], sorted_cols[-1]
    widths = sorted_cols[m:, :] - sorted_cols[:-m, :]
    idx = widths.argmin(axis=0)
    cols = np.arange(sorted_cols.shape[1])
    return sorted_cols[idx, cols], sorted_cols[idx + m, cols]


@dataclass(frozen=True)
class HiddenPopulationInterval:
    region: int
    time: int
    point_estimate: float
    hdi_lower: float
    hdi_upper: float
    alpha_level: float


def hidden_population_draws(draws: PosteriorDraws, y_observed: np.ndarray) -> np.ndarray:
    """Per-draw hidden-population values Y * exp(eta+ + u+), shape (S, N, T).

    y_observed is on the level scale (not logs) and may contain zeros, in
    which case the cell is identically zero in every draw.
    """
    y_observed = np.asarray(y_observed, dtype=float)
    if np.any(y_observed < 0):
        raise ValueError("observed level values must be nonnegative")
    return y_observed[None, :, :] * np.exp(draws.eta_plus[:, :, None] + draws.u_plus)


def predictive_intervals(draws: PosteriorDraws, y_observed: np.ndarray, level: float):
    """(point, lower, upper) arrays of shape (N, T) for the hidden population."""
    q = hidden_population_draws(draws, y_observed)
    s = q.shape[0]
    if s < MIN_HDI_DRAWS:
        raise ValueError(f"need at least {MIN_HDI_DRAWS} draws, got {s}")
    flat = q.reshape(s, -1)
    point = flat.mean(axis=0)
    lo, hi = _hdi_columns(np.sort(flat, axis=0), level)
    shape = y_observed.shape
    return point.reshape(shape), lo.reshape(shape), hi.reshape(shape)


def hidden_population_interval(draws: PosteriorDraws, y_observed: np.ndarray,
                               region: int, time: int,
                               level: float) -> HiddenPopulationInterval:
    """Predictive interval for one region-period cell."""
    y_observed = np.asarray(y_observed, dtype=float)
    if np.any(y_observed < 0):
        raise ValueError("observed level values must be nonnegative")
    cell = y_observed[region, time] * np.exp(
        draws.eta_plus[:, region] + draws.u_plus[:, region, time]
    )
    lo, hi = hdi(cell, level)
    return HiddenPopulationInterval(
        region=region, time=time,
        point_estimate=float(cell.mean()),
        hdi_lower=lo, hdi_upper=hi, alpha_level=level,
    )


@dataclass(frozen=True)
class CoverageReport:
    nominal_level: float
    posterior_mean_coverage: float
    coverage_hdi: tuple[float, float]
    a: int
    b: int


def coverage_report(lower: np.ndarray, upper: np.ndarray, true_p: np.ndarray,
                    level: float, n_beta_draws: int = 20000,
                    rng: np.random.Generator | None = None) -> CoverageReport:
    """Beta-Binomial summary of how often the intervals caught the truth.

    Indicator per cell, flat Beta(1, 1) prior, so the posterior is
    Beta(1 + hits, 1 + misses); the point estimate is the mean of the
    Monte Carlo Beta draws and the attached interval is their 95% HDI.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    true_p = np.asarray(true_p, dtype=float)
    if not lower.shape == upper.shape == true_p.shape:
        raise ValueError("interval bounds and truth must share one shape")
    rng = rng if rng is not None else np.random.default_rng(0)
    hits = int(np.sum((true_p >= lower) & (true_p <= upper)))
    total = true_p.size
    a, b = 1 + hits, 1 + total - hits
    beta_draws = rng.beta(a, b, n_beta_draws)
    return CoverageReport(
        nominal_level=level,
        posterior_mean_coverage=float(beta_draws.mean()),
        coverage_hdi=hdi(beta_draws, 0.95),
        a=a, b=b,
    )


@dataclass(frozen=True)
class MapeSummary:
    average: float
    median: float
    hdi_lower: float
    hdi_upper: float
    n_excluded: int
    per_draw: bool


def mape_summary(draws: PosteriorDraws, y_observed: np.ndarray, true_p: np.ndarray,
                 per_draw: bool = False) -> MapeSummary:
    """Absolute percentage error of the hidden-population estimate per cell.

    Default: |P - E[P]| / P with the posterior-mean point estimate (the
    per-draw average of this quantity is the quantity itself, so none is
    taken). per_draw=True instead averages |P - P^(s)| / P over draws.
    Cells with true P = 0 are excluded and counted.
    """
    q = hidden_population_draws(draws, y_observed)
    true_p = np.asarray(true_p, dtype=float)
    keep = true_p != 0.0
    n_excluded = int(np.sum(~keep))
    if per_draw:
        err = np.abs((true_p[None, :, :] - q) / np.where(keep, true_p, 1.0)[None, :, :])
        cellwise = err.mean(axis=0)[keep]
    else:
        point = q.mean(axis=0)
        cellwise = np.abs((true_p[keep] - point[keep]) / true_p[keep])
    lo, hi = _hdi_unchecked(cellwise, 0.95)
    return MapeSummary(
        average=float(cellwise.mean()),
        median=float(np.median(cellwise)),
        hdi_lower=lo, hdi_upper=hi,
        n_excluded=n_excluded, per_draw=per_draw,
    )


def rho_hat(draw_matrix: np.ndarray, truth: np.ndarray) -> float:
    """Average over draws of the Pearson correlation with the truth vector."""
    draw_matrix = np.asarray(draw_matrix, dtype=float)
    truth = np.asarray(truth, dtype=float).ravel()
    if draw_matrix.ndim != 2 or draw_matrix.shape[1] != truth.size:
        raise ValueError(
            f"draws must be (S, {truth.size}), got {draw_matrix.shape}"
        )
    t_c = truth - truth.mean()
    t_norm = np.sqrt(np.sum(t_c * t_c))
    if t_norm == 0.0:
        raise ValueError("truth vector has zero variance; correlation undefined")
    d_c = draw_matrix - draw_matrix.mean(axis=1, keepdims=True)
    d_norm = np.sqrt(np.sum(d_c * d_c, axis=1))
    if np.any(d_norm == 0.0):
        raise ValueError("a draw has zero variance; correlation undefined")
    return float(np.mean(d_c @ t_c / (d_norm * t_norm)))


@dataclass(frozen=True)
class UncapturedSummary:
    permanent_pct: float
    total_pct: float
    lambda_stat: float
    spatial_share: float


def uncaptured_summaries(draws: PosteriorDraws) -> UncapturedSummary:
    """Posterior means of the uncaptured percentages and variability shares.

    permanent: 1 - exp(-eta+) averaged over draws and regions;
    total: 1 - exp(-(eta+ + u+)) averaged over draws and cells;
    lambda: (sigma_eta + sigma_u) / sigma_eps per draw, then averaged;
    spatial share: marginal spatial sd over the total sd, where the
    marginal spatial sd is sigma_v / (0.7 * average row sum) and the total
    pools it with the other four components on the sd scale.
    """
    permanent = float(np.mean(1.0 - np.exp(-draws.eta_plus)))
    total = float(np.mean(1.0 - np.exp(-(draws.eta_plus[:, :, None] + draws.u_plus))))
    s_eta = np.sqrt(draws.sigma2_eta)
    s_u = np.sqrt(draws.sigma2_u)
    s_eps = np.sqrt(draws.sigma2_eps)
    s_alpha = np.sqrt(draws.sigma2_alpha)
    lam = float(np.mean((s_eta + s_u) / s_eps))
    msd = np.sqrt(draws.sigma2_v) / (0.7 * draws.avg_row_sum)
    total_sd = np.sqrt(msd**2 + s_alpha**2 + s_eps**2 + s_eta**2 + s_u**2)
    share = float(np.mean(msd / total_sd))
    return UncapturedSummary(permanent, total, lam, share)


def uncaptured_by_cell(draws: PosteriorDraws, group_by: str | None = None) -> np.ndarray:
    """Posterior mean uncaptured percentage per cell (N, T).

    group_by='region' averages across periods (length N), 'period' across
    regions (length T); None keeps the full grid.
    """
    cell = np.mean(1.0 - np.exp(-(draws.eta_plus[:, :, None] + draws.u_plus)), axis=0)
    if group_by is None:
        return cell
    if group_by == "region":
        return cell.mean(axis=1)
    if group_by == "period":
        return cell.mean(axis=0)
    raise ValueError(f"unknown grouping {group_by!r}")


def chain_summary(draws: PosteriorDraws, level: float = 0.95) -> list[dict]:
    """Posterior mean / median / HDI rows for every reported quantity.

    Scale parameters are summarised on the standard-deviation scale. The
    one-sided blocks report the negated components (their effect on the
    response); their mean/median aggregate the per-unit posterior means
    and the HDI is taken over the per-draw cross-unit average.
    """
    rows = []

    def add(name, samples):
        lo, hi = hdi(samples, level)
        rows.append({
            "parameter": name,
            "mean": float(np.mean(samples)),
            "median": float(np.median(samples)),
            "hdi_lower": lo,
            "hdi_upper": hi,
        })

    for k in range(draws.beta.shape[1]):
        add(f"beta_{k + 1}", draws.beta[:, k])
    for name in ("sigma2_eta", "sigma2_u", "sigma2_v", "sigma2_alpha", "sigma2_eps"):
        add(name.replace("sigma2_", "sigma_"), np.sqrt(getattr(draws, name)))
    lam = (np.sqrt(draws.sigma2_eta) + np.sqrt(draws.sigma2_u)) / np.sqrt(draws.sigma2_eps)
    add("lambda", lam)

    minus_eta_units = -draws.eta_plus.mean(axis=0)          # per region
    minus_u_units = -draws.u_plus.mean(axis=0).ravel()      # per cell
    v_units = draws.v.mean(axis=0)
    for name, units, per_draw_avg in (
        ("minus_eta_plus", minus_eta_units, -draws.eta_plus.mean(axis=1)),
        ("minus_u_plus", minus_u_units, -draws.u_plus.mean(axis=(1, 2))),
        ("v", v_units, draws.v.mean(axis=1)),
    ):
        lo, hi = hdi(per_draw_avg, level)
        rows.append({
            "parameter": name,
            "mean": float(np.mean(units)),
            "median": float(np.median(units)),
            "hdi_lower": lo,
            "hdi_upper": hi,
        })
    return rows


def _write_rows(path, header: list[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                FLOAT_FMT % v if isinstance(v, float) else v for v in row
            ])


def write_summary_csv(rows: list[dict], path) -> None:
    _write_rows(path, ["parameter", "mean", "median", "hdi_lower", "hdi_upper"],
                [[r["parameter"], r["mean"], r["median"], r["hdi_lower"], r["hdi_upper"]]
                 for r in rows])


def write_coverage_csv(reports: list[CoverageReport], path) -> None:
    _write_rows(path,
                ["level", "mean_coverage", "hdi_lower", "hdi_upper", "a", "b"],
                [[r.nominal_level, r.posterior_mean_coverage,
                  r.coverage_hdi[0], r.coverage_hdi[1], r.a, r.b]
                 for r in reports])


def write_mape_csv(summaries: list[MapeSummary], path) -> None:
    _write_rows(path,
                ["variant", "average", "median", "hdi_lower", "hdi_upper", "n_excluded"],
                [["per_draw" if s.per_draw else "point", s.average, s.median,
                  s.hdi_lower, s.hdi_upper, s.n_excluded]
                 for s in summaries])


def write_uncaptured_csv(draws: PosteriorDraws, regions, times, path,
                         group_by: str | None = None) -> None:
    cell = uncaptured_by_cell(draws, group_by)
    if group_by == "region":
        _write_rows(path, ["region", "pct"],
                    [[int(regions[i]), float(cell[i])] for i in range(len(regions))])
    elif group_by == "period":
        _write_rows(path, ["time", "pct"],
                    [[int(times[t]), float(cell[t])] for t in range(len(times))])
    else:
        rows = []
        for i in range(cell.shape[0]):
            for t in range(cell.shape[1]):
                rows.append([int(regions[i]), int(times[t]), float(cell[i, t])])
        _write_rows(path, ["region", "time", "pct"], rows)
