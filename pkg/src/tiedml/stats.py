"""Statistical comparison utilities and the experiment report record."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

__all__ = [
    "ks_distance",
    "ks_threshold",
    "moment_report",
    "bootstrap_ci",
    "ComparisonReport",
    "mean_report",
    "ecdf_csv",
]

REPORT_SCHEMA = 1


def _jsonable(obj):
    """Recursively turn numpy scalars/arrays into plain JSON types."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj

# Two-sample KS acceptance thresholds, calibrated per sample size rather than
# through asymptotic p-values: the samplers under comparison are grid
# discretizations, so a fixed threshold per (n, level) keeps the tests honest.
# Values are c(level) * sqrt(2/n) for equal sample sizes, rounded up slightly.
_KS_TABLE = {
    (0.01, 1_000): 0.0729,
    (0.01, 10_000): 0.0231,
    (0.01, 100_000): 0.0073,
    (0.05, 1_000): 0.0608,
    (0.05, 10_000): 0.0193,
    (0.05, 100_000): 0.0061,
}
_KS_C = {0.01: 1.6276, 0.05: 1.3581}


def ks_distance(xs, ys) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup |F_n - G_m| over the data."""
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise ValueError("ks_distance needs nonempty samples")
    grid = np.concatenate((xs, ys))
    fx = np.searchsorted(xs, grid, side="right") / xs.size
    fy = np.searchsorted(ys, grid, side="right") / ys.size
    return float(np.max(np.abs(fx - fy)))


def ks_threshold(n: int, m: int | None = None, level: float = 0.01) -> float:
    """Acceptance threshold for the two-sample KS statistic.

    Uses the embedded fixed-sample-size table when it applies and the
    c(level) * sqrt((n+m)/(n m)) rule otherwise.
    """
    if level not in _KS_C:
        raise ValueError(f"no calibration for level {level}")
    if m is None or m == n:
        key = (level, int(n))
        if key in _KS_TABLE:
            return _KS_TABLE[key]
        m = n
    return _KS_C[level] * math.sqrt((n + m) / (n * m))


def moment_report(xs, p: int) -> tuple[float, float]:
    """Sample p-th moment with jackknife standard error."""
    xs = np.asarray(xs, dtype=float)
    if p < 1:
        raise ValueError("p must be >= 1")
    n = xs.size
    powers = xs**p
    est = float(np.mean(powers))
    if n < 2:
        return est, 0.0
    total = np.sum(powers)
    loo = (total - powers) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - np.mean(loo)) ** 2)))
    return est, se


def mean_report(xs) -> tuple[float, float]:
    """Sample mean with its standard error."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("empty sample")
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(np.mean(xs)), float(np.std(xs, ddof=1) / math.sqrt(xs.size))


def bootstrap_ci(
    xs,
    statistic: Callable[[np.ndarray], float],
    level: float = 0.95,
    reps: int = 1_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval, deterministic given the seed."""
    xs = np.asarray(xs, dtype=float)
    if reps < 100:
        raise ValueError("reps must be >= 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    stats = np.empty(reps)
    n = xs.size
    for r in range(reps):
        stats[r] = statistic(xs[rng.integers(0, n, n)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass
class ComparisonReport:
    """Universal experiment output.

    ``passed`` is maintained as |lhs - rhs| <= tolerance + z * combined SE,
    with combined SE = sqrt(lhs_se^2 + rhs_se^2) and z declared in the
    record.  ``tolerance`` absorbs documented systematic allowances (cutoff
    bounds, relative tolerances); pure self-consistency checks use 0.
    """

    experiment: str
    params: dict
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    tolerance: float
    z: float = 3.0
    n_lhs: int = 0
    n_rhs: int = 0
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lhs", "lhs_se", "rhs", "rhs_se", "tolerance", "z"):
            setattr(self, name, float(getattr(self, name)))

    @property
    def combined_se(self) -> float:
        return math.sqrt(self.lhs_se**2 + self.rhs_se**2)

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= self.tolerance + self.z * self.combined_se

    def to_dict(self) -> dict:
        out = {"schema": REPORT_SCHEMA}
        out.update(asdict(self))
        out["params"] = _jsonable(out["params"])
        out["extra"] = _jsonable(out["extra"])
        out["pass"] = bool(self.passed)
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @staticmethod
    def from_dict(obj: dict) -> "ComparisonReport":
        obj = dict(obj)
        obj.pop("schema", None)
        obj.pop("pass", None)
        return ComparisonReport(**obj)

    def one_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.experiment}: lhs={self.lhs:.6g} (se {self.lhs_se:.2g}) "
            f"rhs={self.rhs:.6g} (se {self.rhs_se:.2g}) tol={self.tolerance:.3g} z={self.z:g}"
        )


def ecdf_csv(xs, ys=None) -> str:
    """CSV dump of one or two empirical CDFs for external plotting."""
    lines = ["x,F1" if ys is None else "x,F1,F2"]
    xs = np.sort(np.asarray(xs, dtype=float))
    if ys is None:
        for i, x in enumerate(xs):
            lines.append(f"{float(x)!r},{(i + 1) / xs.size!r}")
    else:
        ys = np.sort(np.asarray(ys, dtype=float))
        grid = np.unique(np.concatenate((xs, ys)))
        f1 = np.searchsorted(xs, grid, side="right") / xs.size
        f2 = np.searchsorted(ys, grid, side="right") / ys.size
        for x, a, b in zip(grid, f1, f2):
            lines.append(f"{float(x)!r},{float(a)!r},{float(b)!r}")
    return "\n".join(lines) + "\n"
