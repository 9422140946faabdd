"""Simulation of the intermittent interval maps with a neutral fixed point at
0: orbits, return times, Ulam-discretized invariant density, empirical return
sequences, and the Monte Carlo check of the averaged tied-down limit.

The map with parameter g in (0, 1) is x (1 + (2x)^(1/g)) on [0, 1/2) and
2x - 1 on [1/2, 1]; the reference set is [1/2, 1], on which the invariant
measure is normalized to mass one.  The invariant density blows up like
x^(-1/g) at 0, so the full invariant measure is infinite; all statements here
are with respect to the normalized restriction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .paths import ProductFunctional
from .processes import check_gamma, NumericError
from .renewal import RenewalTables, LifetimeDist
from .stats import ComparisonReport, mean_report

__all__ = [
    "OMEGA",
    "lsv_map",
    "ReturnTime",
    "return_time",
    "LsvSystem",
    "ulam_density",
    "sample_from_omega",
    "OccupationRecord",
    "occupation_record",
    "empirical_return_sequence",
    "verify_umbrella_mc",
]

OMEGA = (0.5, 1.0)


def lsv_map(gamma: float, x):
    """One step of the intermittent map.  Exact branch evaluation; accepts
    scalars or arrays."""
    gamma = check_gamma(gamma)
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise ValueError("the map acts on [0, 1]")
    lo = xs < 0.5
    out = np.where(lo, xs * (1.0 + (2.0 * xs) ** (1.0 / gamma)), 2.0 * xs - 1.0)
    return float(out) if out.ndim == 0 else out


def _step(x: np.ndarray, inv_gamma: float) -> np.ndarray:
    lo = x < 0.5
    return np.where(lo, x * (1.0 + (2.0 * x) ** inv_gamma), 2.0 * x - 1.0)


class ReturnTime(NamedTuple):
    steps: int
    censored: bool


def return_time(gamma: float, x: float, cap: int = 10_000_000) -> ReturnTime:
    """First j >= 1 with the j-th iterate back in [1/2, 1], censored at cap."""
    gamma = check_gamma(gamma)
    if not OMEGA[0] <= x <= OMEGA[1]:
        raise ValueError("return_time starts from the reference set [1/2, 1]")
    inv_gamma = 1.0 / gamma
    y = x
    for j in range(1, cap + 1):
        y = y * (1.0 + (2.0 * y) ** inv_gamma) if y < 0.5 else 2.0 * y - 1.0
        if y >= 0.5:
            return ReturnTime(j, False)
    return ReturnTime(cap, True)


# -- Ulam discretization -----------------------------------------------------


@dataclass
class LsvSystem:
    """Ulam-discretized system: cell edges, invariant cell masses and density.

    The invariant density is normalized so the reference set [1/2, 1] has
    mass one.  ``residual`` is the L1 defect of the discretized fixed point.
    """

    gamma: float
    edges: np.ndarray
    masses: np.ndarray
    density: np.ndarray
    residual: float
    omega: tuple = OMEGA

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density_csv(self) -> str:
        lines = ["cell_left,cell_right,value"]
        for l, r, v in zip(self.edges[:-1], self.edges[1:], self.density):
            lines.append(f"{float(l)!r},{float(r)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"


def _branch1_inverse(gamma: float, y: float) -> float:
    """Inverse of x (1 + (2x)^(1/g)) on [0, 1/2); the branch is increasing onto [0, 1)."""
    if y <= 0.0:
        return 0.0
    inv_gamma = 1.0 / gamma
    f = lambda x: x * (1.0 + (2.0 * x) ** inv_gamma) - y
    return brentq(f, 0.0, 0.5, xtol=1e-15, rtol=1e-15)


def _overlap_deposit(rows, cols, vals, i_cells, edges, lo, hi, weight_per_len):
    """Distribute the interval [lo, hi) over grid cells, appending COO entries."""
    if hi <= lo:
        return
    j0 = int(np.searchsorted(edges, lo, side="right")) - 1
    j1 = int(np.searchsorted(edges, hi, side="left"))
    for j in range(max(j0, 0), min(j1, edges.size - 1)):
        seg = min(hi, edges[j + 1]) - max(lo, edges[j])
        if seg > 0.0:
            rows.append(i_cells)
            cols.append(j)
            vals.append(seg * weight_per_len)


def ulam_density(
    gamma: float,
    grid: int = 4096,
    x_min: float = 1e-6,
    tol: float = 1e-8,
) -> LsvSystem:
    """Invariant density of the discretized transfer operator.

    The partition is geometric on [x_min, 1/2] (refined toward the neutral
    fixed point) and uniform on [1/2, 1].  The stationary cell-mass vector of
    the Ulam matrix is obtained by a direct sparse solve; plain power
    iteration mixes at the escape rate of the smallest cells near 0, which is
    impractically slow at fine grids.  The fixed-point residual is verified
    against ``tol`` afterwards.
    """
    gamma = check_gamma(gamma)
    if grid < 64:
        raise ValueError("grid too coarse")
    n_left = grid // 2
    n_right = grid - n_left
    left = np.geomspace(x_min, 0.5, n_left + 1)
    left[0] = 0.0  # first cell absorbs [0, x_min)
    right = np.linspace(0.5, 1.0, n_right + 1)
    edges = np.unique(np.concatenate((left, right)))
    n = edges.size - 1

    inv_gamma = 1.0 / gamma
    # preimage edges under each increasing branch
    b1 = np.array([_branch1_inverse(gamma, y) for y in edges])
    b2 = (edges + 1.0) / 2.0
    widths = np.diff(edges)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for j in range(n):  # destination cell j receives mass from its preimages
        for pre_lo, pre_hi in ((b1[j], b1[j + 1]), (b2[j], b2[j + 1])):
            _overlap_deposit(rows, cols, vals, j, edges, pre_lo, pre_hi, 1.0)
    # vals currently hold |cell_i  intersect  preimage(cell_j)| lengths keyed by
    # (dest j, source i); convert to the mass-transfer matrix M[i, j] =
    # overlap / width_i so that masses' = M^T masses.
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=float) / widths[cols]
    m = sp.csr_matrix((vals, (cols, rows)), shape=(n, n))

    a = (sp.eye(n, format="csr") - m.T).tolil()
    a[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    masses = spla.spsolve(a.tocsc(), b)
    masses = np.maximum(masses, 0.0)
    masses /= masses.sum()
    residual = float(np.abs(m.T @ masses - masses).sum())
    if residual > tol:
        raise NumericError(
            f"Ulam fixed point residual {residual:.3e} above tolerance {tol:.1e}"
        )
    in_omega = edges[:-1] >= OMEGA[0] - 1e-15
    omega_mass = float(masses[in_omega].sum())
    masses = masses / omega_mass
    density = masses / widths
    return LsvSystem(gamma, edges, masses, density, residual)


def sample_from_omega(system: LsvSystem, n: int, rng) -> np.ndarray:
    """Draw from the normalized invariant measure restricted to [1/2, 1] by
    inverse CDF over the Ulam cells, uniform within a cell."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    sel = system.edges[:-1] >= OMEGA[0] - 1e-15
    cells = np.flatnonzero(sel)
    w = system.masses[cells]
    w = w / w.sum()
    idx = rng.choice(cells, size=n, p=w)
    u = rng.random(n)
    return system.edges[idx] + u * (system.edges[idx + 1] - system.edges[idx])


# -- occupation statistics -----------------------------------------------------


@dataclass
class OccupationRecord:
    """Occupation counts of one orbit at the requested checkpoints.

    ``counts[k]`` is the number of visits to [1/2, 1] among the first
    ``checkpoints[k]`` iterates (the start point included), a nondecreasing
    integer sequence; ``a_used`` records the normalization applied downstream.
    """

    n: int
    checkpoints: np.ndarray
    counts: np.ndarray
    a_used: float = float("nan")

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(np.diff(self.counts) < 0):
            raise ValueError("occupation counts must be nondecreasing")


def occupation_record(gamma: float, x0: float, n: int, checkpoints) -> OccupationRecord:
    """Iterate one orbit for n steps, recording occupation counts of the
    reference set at the given checkpoint indices."""
    gamma = check_gamma(gamma)
    checkpoints = np.asarray(sorted(int(c) for c in checkpoints))
    if checkpoints.size == 0 or checkpoints[0] < 0 or checkpoints[-1] > n:
        raise ValueError("checkpoints must lie in [0, n]")
    inv_gamma = 1.0 / gamma
    x = float(x0)
    s = 0
    out = np.zeros(checkpoints.size, dtype=np.int64)
    nxt = 0
    for j in range(n + 1):
        while nxt < checkpoints.size and checkpoints[nxt] == j:
            out[nxt] = s
            nxt += 1
        if nxt >= checkpoints.size:
            break
        if x >= 0.5:
            s += 1
        x = x * (1.0 + (2.0 * x) ** inv_gamma) if x < 0.5 else 2.0 * x - 1.0
    return OccupationRecord(n, checkpoints, out)


def empirical_return_sequence(
    gamma: float,
    n_max: int,
    samples: int,
    seed: int = 0,
    system: LsvSystem | None = None,
    batch: int = 20_000,
) -> RenewalTables:
    """Empirical return-probability and return-sequence tables.

    u_hat(k) is the fraction of orbits started from the normalized invariant
    measure on [1/2, 1] that sit in the set after k steps; a_hat is its
    prefix sum.  Returned in the same table container the exact engine uses
    (tails are not an empirical notion and are left unset).
    """
    gamma = check_gamma(gamma)
    if system is None:
        system = ulam_density(gamma)
    rng = np.random.default_rng(seed)
    inv_gamma = 1.0 / gamma
    counts = np.zeros(n_max + 1)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        x = sample_from_omega(system, b, rng)
        counts[0] += b  # started inside the set
        for k in range(1, n_max + 1):
            x = _step(x, inv_gamma)
            counts[k] += np.count_nonzero(x >= 0.5)
        done += b
    u_hat = counts / samples
    a_hat = np.concatenate(([0.0], np.cumsum(u_hat[1:])))
    lifetime_stub = LifetimeDist(np.array([0.0, 1.0]), "custom", {}, gamma, 0.0)
    return RenewalTables(lifetime_stub, u_hat, a_hat, None, gamma, method="empirical")


def verify_umbrella_mc(
    gamma: float,
    n: int,
    samples: int,
    pf: ProductFunctional,
    seed: int = 0,
    system: LsvSystem | None = None,
    tables: RenewalTables | None = None,
    reference: tuple[float, float] | None = None,
    rel_tolerance: float = 0.15,
    batch: int = 128,
) -> ComparisonReport:
    """Monte Carlo check of the averaged tied-down limit on the interval map.

    For orbits started from the normalized invariant measure on the
    reference set, averages

        (1/a_hat(n)) * sum_{k<=n} G(psi_k) * 1[T^k x in set],

    where psi_k(t) = s_floor(kt) / a_hat(k) is the normalized occupation
    path and G the product functional, and compares against the sampler
    estimate of the tied-down expectation (``reference``, computed by the
    caller from the process samplers).  Checkpoint counts are gathered per
    orbit from the occupation prefix sums, so evaluation is O(1) per (orbit,
    k) pair.
    """
    gamma = check_gamma(gamma)
    if reference is None:
        raise ValueError("pass reference=(value, se) from the process samplers")
    if system is None:
        system = ulam_density(gamma)
    if tables is None or tables.n < n:
        tables = empirical_return_sequence(gamma, n, max(2000, samples // 2), seed + 1, system)
    a_hat = tables.a
    if a_hat.size < n + 1:
        raise ValueError("empirical tables shorter than n")
    rng = np.random.default_rng(seed)
    inv_gamma = 1.0 / gamma

    ks = np.arange(1, n + 1)
    a_k = a_hat[1 : n + 1]
    ok = a_k > 0
    cp_idx = [np.floor(ks * t).astype(np.int64) for t in pf.times]

    per_orbit = np.empty(samples)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        x = sample_from_omega(system, b, rng)
        occ = np.empty((b, n + 1), dtype=np.uint8)
        occ[:, 0] = 1
        for k in range(1, n + 1):
            x = _step(x, inv_gamma)
            occ[:, k] = x >= 0.5
        s = np.zeros((b, n + 1), dtype=np.int32)
        np.cumsum(occ[:, :-1], axis=1, dtype=np.int32, out=s[:, 1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.ones((b, n), dtype=float)
            for t_idx, f in zip(cp_idx, pf.factors):
                term *= f(s[:, t_idx] / a_k)
            tail = (s[:, ks] - s[:, cp_idx[-1]]) / a_k
            term *= pf.terminal(tail)
        term *= occ[:, 1:]
        term[:, ~ok] = 0.0
        per_orbit[done : done + b] = term.sum(axis=1) / a_hat[n]
        done += b

    lhs, lhs_se = mean_report(per_orbit)
    rhs, rhs_se = reference
    return ComparisonReport(
        experiment="umbrella-lsv",
        params={
            "gamma": gamma,
            "n": n,
            "samples": samples,
            "pf": pf.describe(),
        },
        lhs=lhs,
        lhs_se=lhs_se,
        rhs=rhs,
        rhs_se=rhs_se,
        tolerance=rel_tolerance * abs(rhs),
        z=0.0,
        n_lhs=samples,
        seed=seed,
        extra={"a_hat_n": float(a_hat[n]), "rel_tolerance": rel_tolerance},
    )
