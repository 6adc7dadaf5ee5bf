"""Unconditional spatial screening via standardized incidence ratios.

Expected counts standardise within each period (every region gets the
period's aggregate rate applied to its own population); the ratio of
observed to expected is smoothed through a gamma prior on the relative
risk, giving closed-form posterior exceedance probabilities used to flag
hot spots at fixed credibility tiers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import gammaincc

from .data import CountPanel, FLOAT_FMT

DEFAULT_PRIOR_NU = 0.01
DEFAULT_PRIOR_ALPHA = 0.01
DEFAULT_TIERS = (0.90, 0.95, 0.99)


@dataclass(frozen=True)
class SirTable:
    sir: np.ndarray          # (N, T) observed / expected
    expected: np.ndarray     # (N, T)
    exceedance: np.ndarray | None
    prior_nu: float
    prior_alpha: float
    regions: np.ndarray
    times: np.ndarray


def compute_sir(panel: CountPanel) -> SirTable:
    """Expected counts and incidence ratios, one standardisation per period.

    E_it = n_it * (sum_i s_it) / (sum_i n_it), so expected counts sum to
    the observed counts within each period. The ratio s/E is also the
    Poisson maximum-likelihood estimate of the relative risk.
    """
    s = panel.s.astype(float)
    n = panel.n
    s_tot = s.sum(axis=0)
    if np.any(s_tot <= 0):
        bad = np.flatnonzero(s_tot <= 0).tolist()
        raise ValueError(f"periods with zero total count: {bad}")
    expected = n * (s_tot / n.sum(axis=0))[None, :]
    sir = s / expected
    return SirTable(
        sir=sir, expected=expected, exceedance=None,
        prior_nu=DEFAULT_PRIOR_NU, prior_alpha=DEFAULT_PRIOR_ALPHA,
        regions=panel.regions, times=panel.times,
    )


def exceedance_probability(s, expected, nu: float = DEFAULT_PRIOR_NU,
                           alpha: float = DEFAULT_PRIOR_ALPHA):
    """P(relative risk > 1 | s, E) under the gamma-Poisson model.

    The risk posterior is Gamma(shape s + nu, rate E + alpha), so the
    exceedance is the regularized upper incomplete gamma function at the
    rate (shape/rate parameterisation, not shape/scale).
    """
    s = np.asarray(s, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if np.any(s < 0):
        raise ValueError("counts must be nonnegative")
    if np.any(expected <= 0):
        raise ValueError("expected counts must be positive")
    if not (nu > 0 and alpha > 0):
        raise ValueError("prior parameters must be positive")
    out = gammaincc(s + nu, expected + alpha)
    return float(out) if out.ndim == 0 else out


def score_exceedance(table: SirTable, nu: float = DEFAULT_PRIOR_NU,
                     alpha: float = DEFAULT_PRIOR_ALPHA) -> SirTable:
    s = table.sir * table.expected
    exc = exceedance_probability(s, table.expected, nu, alpha)
    return replace(table, exceedance=exc, prior_nu=nu, prior_alpha=alpha)


def flag_hotspots(table: SirTable, thresholds=DEFAULT_TIERS) -> np.ndarray:
    """Tier label per cell: the highest threshold its exceedance reaches.

    Thresholds are inclusive (an exceedance of exactly 0.90 earns the 90
    tier); cells under every threshold are labelled 'none'.
    """
    if table.exceedance is None:
        raise ValueError("exceedance probabilities not computed yet")
    thresholds = sorted(thresholds)
    tiers = np.full(table.exceedance.shape, "none", dtype=object)
    for thr in thresholds:
        label = f"{int(round(thr * 100))}"
        tiers[table.exceedance >= thr] = label
    return tiers


def write_sir_csv(table: SirTable, tiers: np.ndarray, path) -> None:
    if table.exceedance is None:
        raise ValueError("exceedance probabilities not computed yet")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "time", "sir", "expected", "exceedance", "tier"])
        n, t = table.sir.shape
        for i in range(n):
            for j in range(t):
                writer.writerow([
                    int(table.regions[i]), int(table.times[j]),
                    FLOAT_FMT % table.sir[i, j],
                    FLOAT_FMT % table.expected[i, j],
                    FLOAT_FMT % table.exceedance[i, j],
                    tiers[i, j],
                ])
