"""Empirical statistics over signal sets and comparison with ground truth.

Estimators follow the uncentered convention (all target processes are
zero-mean); standard errors come from the per-sample variance of the
averaged products.  ``compare`` turns an (empirical, analytic) pair into
a z-score report with a configurable pass policy, by default "at least
95% of grid points within 3 standard errors".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, InsufficientSamplesError, OutOfRangeError
from .signals import SignalSet


def _as_array(signals: SignalSet | np.ndarray) -> np.ndarray:
    data = signals.data if isinstance(signals, SignalSet) else np.asarray(signals, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("signals must be a 2-D (n, length) array")
    return data


def empirical_covariance(
    signals: SignalSet | np.ndarray,
    centered: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Uncentered covariance C(t, t') = mean_i x_i(t) x_i(t') and its standard error.

    ``centered`` subtracts the per-time sample mean first (useful for
    model outputs whose mean may drift).  Returns (C, SE), both (T, T).

    Raises:
        InsufficientSamplesError: fewer than 2 signals.
    """
    x = _as_array(signals)
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need >= 2 signals, got {n}")
    if centered:
        x = x - x.mean(axis=0, keepdims=True)
    cov = (x.T @ x) / n
    second = (x**2).T @ (x**2) / n
    var_products = np.maximum(second - cov**2, 0.0)
    se = np.sqrt(var_products / n)
    return cov, se


def covariance_lags(
    signals: SignalSet | np.ndarray,
    t1: int,
    max_lag: int,
    centered: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One covariance row mean_i x_i(t1) x_i(t1+lag), lag = 0..max_lag, with SE."""
    x = _as_array(signals)
    n, length = x.shape
    if n < 2:
        raise InsufficientSamplesError(f"need >= 2 signals, got {n}")
    if not (0 <= t1 and t1 + max_lag < length):
        raise OutOfRangeError(f"lags 0..{max_lag} from t1={t1} exceed length {length}")
    if centered:
        x = x - x.mean(axis=0, keepdims=True)
    products = x[:, t1 : t1 + max_lag + 1] * x[:, [t1]]
    vals = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / np.sqrt(n)
    return vals, se


def stationarity_profile(
    cov: np.ndarray,
    t1_list: list[int],
    tau_max: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Slices C(t1, t1+tau) for each start time, plus pairwise max deviations.

    Returns (slices, dev) with slices[i, tau] = cov[t1_i, t1_i + tau] and
    dev[i, j] = max_tau |slices[i] - slices[j]|; a process that is
    stationary past some step shows near-zero deviations between the
    corresponding rows.

    Raises:
        OutOfRangeError: a slice leaves the matrix.
    """
    cov = np.asarray(cov)
    t = cov.shape[0]
    slices = np.empty((len(t1_list), tau_max + 1))
    for i, t1 in enumerate(t1_list):
        if not (0 <= t1 and t1 + tau_max < t):
            raise OutOfRangeError(f"slice t1={t1}, tau_max={tau_max} exceeds matrix size {t}")
        slices[i] = cov[t1, t1 : t1 + tau_max + 1]
    dev = np.max(np.abs(slices[:, None, :] - slices[None, :, :]), axis=-1)
    return slices, dev


class ThirdOrderAccumulator:
    """Streaming estimator of E[x^3(t1) x(t2)] and E[x(t1) x^3(t2)].

    Accepts signal chunks of shape (n, length) and accumulates the sums
    needed for means and standard errors over t2 = t1..t1+max_lag, so
    arbitrarily large sample counts never have to be held in memory.
    """

    def __init__(self, t1: int, max_lag: int):
        self.t1 = t1
        self.max_lag = max_lag
        self.count = 0
        m = max_lag + 1
        self._sum31 = np.zeros(m)
        self._sumsq31 = np.zeros(m)
        self._sum13 = np.zeros(m)
        self._sumsq13 = np.zeros(m)

    def update(self, chunk: SignalSet | np.ndarray) -> None:
        x = _as_array(chunk)
        if x.shape[1] <= self.t1 + self.max_lag:
            raise OutOfRangeError(
                f"chunk length {x.shape[1]} too short for t1={self.t1}, max_lag={self.max_lag}"
            )
        x1 = x[:, self.t1]
        window = x[:, self.t1 : self.t1 + self.max_lag + 1]
        p31 = (x1**3)[:, None] * window
        p13 = x1[:, None] * window**3
        self._sum31 += p31.sum(axis=0)
        self._sumsq31 += (p31**2).sum(axis=0)
        self._sum13 += p13.sum(axis=0)
        self._sumsq13 += (p13**2).sum(axis=0)
        self.count += x.shape[0]

    def result(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(mean31, se31, mean13, se13) over the accumulated samples."""
        n = self.count
        if n < 2:
            raise InsufficientSamplesError(f"need >= 2 signals, got {n}")

        def mean_se(s, ssq):
            mean = s / n
            var = np.maximum(ssq / n - mean**2, 0.0) * n / (n - 1)
            return mean, np.sqrt(var / n)

        m31, se31 = mean_se(self._sum31, self._sumsq31)
        m13, se13 = mean_se(self._sum13, self._sumsq13)
        return m31, se31, m13, se13


def empirical_third_order(
    signals: SignalSet | np.ndarray,
    t1: int,
    max_lag: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(E[x^3(t1) x(t2)], SE, E[x(t1) x^3(t2)], SE) for t2 = t1..t1+max_lag.

    The two statistics are computed from the same products at t2 = t1, so
    they coincide exactly there.
    """
    acc = ThirdOrderAccumulator(t1, max_lag)
    acc.update(signals)
    return acc.result()


@dataclass
class TolerancePolicy:
    """Pass policy: at least ``min_fraction`` of points within ``n_sigma`` SE."""

    n_sigma: float = 3.0
    min_fraction: float = 0.95


@dataclass
class CorrelatorReport:
    """Empirical statistic vs analytic ground truth with a pass/fail verdict."""

    name: str
    grid_t1: np.ndarray
    grid_t2: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    analytic: np.ndarray | None
    z_scores: np.ndarray
    max_abs_z: float
    fraction_within: float
    passed: bool
    policy: TolerancePolicy = field(default_factory=TolerancePolicy)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"statistic : {self.name}",
            f"points    : {len(self.empirical)}",
            f"max |z|   : {self.max_abs_z:.3f}",
            f"within {self.policy.n_sigma:g} SE : {self.fraction_within:.1%}"
            f" (required >= {self.policy.min_fraction:.0%})",
            f"verdict   : {verdict}",
        ]
        return "\n".join(lines)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t1", "t2", "empirical", "stderr", "analytic", "z"])
            analytic = self.analytic if self.analytic is not None else [""] * len(self.empirical)
            for row in zip(self.grid_t1, self.grid_t2, self.empirical, self.stderr, analytic, self.z_scores):
                writer.writerow(list(row))
        return path


def compare(
    grid_t1: np.ndarray,
    grid_t2: np.ndarray,
    empirical: np.ndarray,
    stderr: np.ndarray,
    analytic: np.ndarray,
    policy: TolerancePolicy | None = None,
    name: str = "statistic",
) -> CorrelatorReport:
    """Score empirical vs analytic values on a shared grid.

    z = (empirical - analytic) / SE per point (0 when both the gap and
    the SE vanish, +inf for a nonzero gap with zero SE).

    Raises:
        GridMismatchError: the arrays do not share one length.
    """
    policy = policy or TolerancePolicy()
    arrays = [np.asarray(a, dtype=np.float64) for a in (grid_t1, grid_t2, empirical, stderr, analytic)]
    grid_t1, grid_t2, empirical, stderr, analytic = arrays
    lengths = {a.shape for a in arrays}
    if len(lengths) != 1 or arrays[0].ndim != 1:
        raise GridMismatchError(f"mismatched grid shapes: {sorted(a.shape for a in arrays)}")
    gap = empirical - analytic
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, gap / np.where(stderr > 0, stderr, 1.0), np.where(gap == 0, 0.0, np.inf))
    within = np.abs(z) <= policy.n_sigma
    fraction = float(np.mean(within)) if len(z) else 1.0
    return CorrelatorReport(
        name=name,
        grid_t1=grid_t1,
        grid_t2=grid_t2,
        empirical=empirical,
        stderr=stderr,
        analytic=analytic,
        z_scores=z,
        max_abs_z=float(np.max(np.abs(z))) if len(z) else 0.0,
        fraction_within=fraction,
        passed=fraction >= policy.min_fraction,
        policy=policy,
    )
