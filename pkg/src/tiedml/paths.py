"""Calculus of nondecreasing cadlag step paths.

A step path is the distribution function of a finite atomic measure on
[0, R]: it is zero before its first jump epoch, right-continuous, and
constant between jumps.  Infinite-horizon objects are represented by
truncation at an explicit horizon; operations that can see past the
truncation (``waiting_D``, ``inverse``) carry censoring flags.

An atom at epoch 0.0 is permitted.  It is what the inverse of a path
whose first jump happens at a positive time looks like, so it cannot be
excluded without making inversion lossy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "DegenerateInputError",
    "StepPath",
    "FactorFunction",
    "ProductFunctional",
    "Waiting",
    "eval_path",
    "inverse",
    "waiting_G",
    "waiting_D",
    "scale",
    "increment_shift",
    "tie_down",
    "eval_product",
    "stieltjes_functional",
    "stieltjes_cutoff_bound",
    "j1_distance",
    "restrict",
    "path_to_json",
    "path_from_json",
    "path_to_csv",
    "path_from_csv",
    "random_step_path",
    "run_selftest",
]


class DomainError(ValueError):
    """Argument outside the domain an operation is defined on."""


class DegenerateInputError(ValueError):
    """Input path lacks the structure the operation needs."""


@dataclass(frozen=True)
class StepPath:
    """Nondecreasing cadlag step function on [0, horizon].

    ``epochs`` are the jump times (strictly increasing, in [0, horizon]);
    ``values[i]`` is the path value on ``[epochs[i], epochs[i+1])``.  The
    value before the first epoch is 0.
    """

    horizon: float
    epochs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        horizon = float(self.horizon)
        epochs = np.asarray(self.epochs, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if not horizon > 0.0:
            raise DomainError(f"horizon must be positive, got {horizon}")
        if epochs.ndim != 1 or values.ndim != 1 or epochs.shape != values.shape:
            raise DomainError("epochs and values must be 1-d arrays of equal length")
        if epochs.size:
            if np.any(np.diff(epochs) <= 0.0):
                raise DomainError("epochs must be strictly increasing")
            if epochs[0] < 0.0 or epochs[-1] > horizon:
                raise DomainError("epochs must lie in [0, horizon]")
            if np.any(np.diff(values) < 0.0) or values[0] < 0.0:
                raise DomainError("values must be nonnegative and nondecreasing")
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "values", values)

    # -- basic queries ----------------------------------------------------

    def __call__(self, t):
        return eval_path(self, t)

    @property
    def n_jumps(self) -> int:
        return int(self.epochs.size)

    @property
    def final_value(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    @property
    def jump_sizes(self) -> np.ndarray:
        if not self.values.size:
            return np.zeros(0)
        return np.diff(self.values, prepend=0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.epochs, other.epochs)
            and np.array_equal(self.values, other.values)
        )


def eval_path(path: StepPath, t) -> float | np.ndarray:
    """Right-continuous evaluation; value of the last jump at or before t."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0.0) or np.any(ts > path.horizon * (1.0 + 1e-15) + 1e-300):
        raise DomainError(f"evaluation time outside [0, {path.horizon}]")
    idx = np.searchsorted(path.epochs, ts, side="right") - 1
    vals = np.where(idx >= 0, path.values[np.maximum(idx, 0)] if path.values.size else 0.0, 0.0)
    if np.isscalar(t) or ts.ndim == 0:
        return float(vals)
    return vals


def restrict(path: StepPath, horizon: float) -> StepPath:
    """Truncate a path to a smaller horizon, dropping later jumps."""
    horizon = float(horizon)
    if not 0.0 < horizon <= path.horizon * (1.0 + 1e-12):
        raise DomainError("restriction horizon must lie in (0, path horizon]")
    keep = path.epochs <= horizon
    return StepPath(horizon, path.epochs[keep], path.values[keep])


def inverse(path: StepPath, value_range: float | None = None) -> StepPath:
    """Right-continuous generalized inverse t -> inf{s > 0 : path(s) > t}.

    The output lives on [0, value_range].  Jump epochs of the output are the
    (distinct) values of the input and vice versa.  At t equal to the final
    value of the input the infimum is not witnessed on the truncation; the
    returned path holds its last level there, which is the only censored
    point when ``value_range`` equals the final value.
    """
    final = path.final_value
    if value_range is None:
        value_range = final
    value_range = float(value_range)
    if value_range <= 0.0:
        raise DomainError("value_range must be positive")
    if value_range > final * (1.0 + 1e-12):
        raise DomainError(
            f"value_range {value_range} exceeds final value {final}; "
            "the inverse is censored beyond the truncation"
        )
    prev = np.concatenate(([0.0], path.values[:-1]))
    rising = path.values > prev
    levels = path.values[rising]      # V_1 < V_2 < ... (left ends of output pieces shifted)
    attained = path.epochs[rising]    # first epoch reaching each level
    # piece m of the inverse is [V_{m-1}, V_m) -> attained[m]
    starts = np.concatenate(([0.0], levels[:-1]))
    keep = starts < value_range
    starts, piece_vals = starts[keep], attained[keep]
    # drop leading zero-value pieces (they coincide with the base level 0)
    nz = piece_vals > 0.0
    return StepPath(value_range, starts[nz], piece_vals[nz])


def waiting_G(path: StepPath, t: float) -> float:
    """Left endpoint of the flat stretch containing t."""
    t = float(t)
    vt = eval_path(path, t)
    if vt == 0.0:
        return 0.0
    i = int(np.searchsorted(path.values, vt, side="left"))
    return float(path.epochs[i])


class Waiting(NamedTuple):
    time: float
    censored: bool


def waiting_D(path: StepPath, t: float) -> Waiting:
    """Supremum of the flat stretch containing t, capped at the horizon.

    ``censored`` is set when the stretch reaches the truncation, in which
    case the true supremum is only known to be >= horizon.
    """
    t = float(t)
    if not 0.0 <= t < path.horizon:
        raise DomainError(f"t must lie in [0, horizon) for waiting_D, got {t}")
    vt = eval_path(path, t)
    i = int(np.searchsorted(path.values, vt, side="right"))
    if i < path.epochs.size:
        return Waiting(float(path.epochs[i]), False)
    return Waiting(path.horizon, True)


def scale(path: StepPath, a: float, gamma: float, horizon: float | None = None) -> StepPath:
    """Time-space rescaling: output(t) = input(a*t) / a**gamma.

    Exact on step paths: epochs divide by a, values by a**gamma.  The output
    horizon defaults to input horizon / a and must satisfy
    a * horizon <= input horizon.
    """
    a = float(a)
    if a <= 0.0:
        raise DomainError("scaling factor must be positive")
    if horizon is None:
        horizon = path.horizon / a
    horizon = float(horizon)
    if a * horizon > path.horizon * (1.0 + 1e-12):
        raise DomainError(
            f"rescaled horizon {a * horizon} overflows input horizon {path.horizon}"
        )
    keep = path.epochs / a <= horizon
    return StepPath(horizon, path.epochs[keep] / a, path.values[keep] / a**gamma)


def increment_shift(path: StepPath, s: float) -> StepPath:
    """Increment semiflow: output(t) = input(s + t) - input(s) on [0, horizon - s]."""
    s = float(s)
    if not 0.0 <= s < path.horizon:
        raise DomainError(f"shift must lie in [0, horizon), got {s}")
    if s == 0.0:
        return path
    base = eval_path(path, s)
    keep = path.epochs > s
    return StepPath(path.horizon - s, path.epochs[keep] - s, path.values[keep] - base)


def tie_down(path: StepPath, gamma: float) -> StepPath:
    """Rescale by the last point of increase before time 1.

    With G the left end of the flat stretch containing 1, returns the
    G-scaling of the path restricted to [0, 1]; the output's last jump epoch
    is exactly 1, so 1 is a point of increase.
    """
    if path.horizon < 1.0:
        raise DomainError("tie_down needs a path defined at least on [0, 1]")
    has_jump = np.any((path.epochs > 0.0) & (path.epochs <= 1.0))
    if not has_jump:
        raise DegenerateInputError("path has no jump in (0, 1]; nothing to tie down")
    g = waiting_G(path, 1.0)
    return scale(path, g, gamma, horizon=1.0)


# -- registered factor functions ------------------------------------------


@dataclass(frozen=True)
class FactorFunction:
    """Member of the registered family of functions on [0, inf].

    Every member is continuous, bounded, nonnegative and has a finite limit
    at infinity, so membership in the admissible test-function class holds
    by construction.  Kinds:

    * ``exp``      exp(-lam * x)
    * ``power``    (1 + x) ** (-beta)
    * ``const``    constant c
    * ``pwlinear`` piecewise linear through (knots, knot_values) with
      constant tails on both sides
    """

    kind: str
    lam: float = 1.0
    beta: float = 1.0
    c: float = 1.0
    knots: tuple = ()
    knot_values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exp", "power", "const", "pwlinear"):
            raise DomainError(f"unknown factor kind {self.kind!r}")
        if self.kind == "exp" and self.lam <= 0:
            raise DomainError("exp factor needs lam > 0")
        if self.kind == "power" and self.beta < 0:
            raise DomainError("power factor needs beta >= 0")
        if self.kind == "const" and self.c < 0:
            raise DomainError("const factor must be nonnegative")
        if self.kind == "pwlinear":
            xs = np.asarray(self.knots, dtype=float)
            ys = np.asarray(self.knot_values, dtype=float)
            if xs.size < 1 or xs.size != ys.size:
                raise DomainError("pwlinear needs matching nonempty knots/values")
            if np.any(np.diff(xs) <= 0):
                raise DomainError("pwlinear knots must be strictly increasing")
            if np.any(ys < 0):
                raise DomainError("pwlinear values must be nonnegative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exp":
            out = np.exp(-self.lam * x)
        elif self.kind == "power":
            out = (1.0 + x) ** (-self.beta)
        elif self.kind == "const":
            out = np.full_like(x, self.c)
        else:
            out = np.interp(x, self.knots, self.knot_values)
        return float(out) if out.ndim == 0 else out

    @property
    def limit_at_inf(self) -> float:
        if self.kind == "exp":
            return 0.0
        if self.kind == "power":
            return 0.0 if self.beta > 0 else 1.0
        if self.kind == "const":
            return self.c
        return float(self.knot_values[-1])

    @property
    def sup_norm(self) -> float:
        if self.kind == "exp":
            return 1.0
        if self.kind == "power":
            return 1.0
        if self.kind == "const":
            return self.c
        return float(max(self.knot_values))

    def describe(self) -> str:
        if self.kind == "exp":
            return f"exp:{self.lam:g}"
        if self.kind == "power":
            return f"power:{self.beta:g}"
        if self.kind == "const":
            return f"const:{self.c:g}"
        pieces = ";".join(f"{x:g},{y:g}" for x, y in zip(self.knots, self.knot_values))
        return f"pwl:{pieces}"

    @staticmethod
    def parse(text: str) -> "FactorFunction":
        """Parse 'exp:LAM', 'power:BETA', 'const:C', 'one', 'pwl:x,y;x,y;...'."""
        text = text.strip()
        if text in ("1", "one"):
            return FactorFunction("const", c=1.0)
        kind, _, rest = text.partition(":")
        if kind == "exp":
            return FactorFunction("exp", lam=float(rest or 1.0))
        if kind == "power":
            return FactorFunction("power", beta=float(rest or 1.0))
        if kind == "const":
            return FactorFunction("const", c=float(rest or 1.0))
        if kind == "pwl":
            pairs = [tuple(float(v) for v in piece.split(",")) for piece in rest.split(";")]
            return FactorFunction(
                "pwlinear",
                knots=tuple(p[0] for p in pairs),
                knot_values=tuple(p[1] for p in pairs),
            )
        raise DomainError(f"cannot parse factor function {text!r}")


ONE = FactorFunction("const", c=1.0)


@dataclass(frozen=True)
class ProductFunctional:
    """Test functional prod_v g_v(xi(t_v)) * h(xi(1) - xi(t_N)) on paths over [0, 1]."""

    times: tuple
    factors: tuple
    terminal: FactorFunction

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 1:
            raise DomainError("product functional needs at least one time")
        if len(times) != len(self.factors):
            raise DomainError("one factor per time required")
        if any(t < 0.0 for t in times) or any(t >= 1.0 for t in times):
            raise DomainError("times must lie in [0, 1)")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "factors", tuple(self.factors))

    def describe(self) -> str:
        inner = ",".join(
            f"{t:g}~{f.describe()}" for t, f in zip(self.times, self.factors)
        )
        return f"[{inner}|{self.terminal.describe()}]"

    @property
    def sup_norm(self) -> float:
        out = self.terminal.sup_norm
        for f in self.factors:
            out *= f.sup_norm
        return out


def eval_product(pf: ProductFunctional, path: StepPath) -> float:
    """Evaluate a product functional on a path with horizon 1."""
    if abs(path.horizon - 1.0) > 1e-12:
        raise DomainError("product functionals act on paths over [0, 1]")
    out = 1.0
    for t, f in zip(pf.times, pf.factors):
        out *= f(eval_path(path, t))
    tail = eval_path(path, 1.0) - eval_path(path, pf.times[-1])
    return out * pf.terminal(tail)


# -- Stieltjes functional ---------------------------------------------------


def stieltjes_functional(
    g: Callable[[StepPath], float],
    path: StepPath,
    gamma: float,
    epsilon: float,
) -> float:
    """Exact Stieltjes sum sum_j g(scale(path, t_j, gamma)|[0,1]) * jump(t_j)
    over jump epochs t_j in (epsilon, 1].

    Step paths have purely atomic Stieltjes measures, so the sum is the
    integral restricted to (epsilon, 1] with no quadrature error.  The
    epsilon cutoff error of the full integral over (0, 1] is bounded by
    sup|g| * path(epsilon); see :func:`stieltjes_cutoff_bound`.
    """
    if path.horizon < 1.0:
        raise DomainError("stieltjes_functional needs horizon >= 1")
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    jumps = path.jump_sizes
    terms = []
    for t_j, dv in zip(path.epochs, jumps):
        if epsilon < t_j <= 1.0 and dv > 0.0:
            terms.append(g(scale(path, t_j, gamma, horizon=1.0)) * dv)
    return math.fsum(terms)


def stieltjes_cutoff_bound(g_sup_norm: float, path: StepPath, epsilon: float) -> float:
    """Upper bound sup|g| * path(epsilon) for the mass lost to the cutoff."""
    return float(g_sup_norm) * eval_path(path, epsilon)


# -- approximate J1 distance ------------------------------------------------


def _sup_diff_on_segment(p, q, x_a, y_a, x_b, y_b):
    """sup |p(x) - q(l(x))| over [x_a, x_b] for the linear l through the pairs.

    Both compared functions are constant between breakpoints, so the sup is
    taken at midpoints of consecutive breakpoints; midpoints are preserved by
    the linear time change, which keeps the result symmetric in (p, q) and
    away from rounding at the discontinuities.
    """
    slope = (y_b - y_a) / (x_b - x_a)
    pts = [x_a, x_b]
    for e in p.epochs:
        if x_a < e < x_b:
            pts.append(float(e))
    for e in q.epochs:
        if y_a < e < y_b:
            pts.append(x_a + (float(e) - y_a) / slope)
    pts = sorted(pts)
    cands = [0.5 * (a + b) for a, b in zip(pts, pts[1:]) if b > a]
    best = 0.0
    for x in cands:
        y = y_a + slope * (x - x_a)
        y = min(max(y, 0.0), q.horizon)
        d = abs(eval_path(p, min(x, p.horizon)) - eval_path(q, y))
        if d > best:
            best = d
    # right endpoint: its image is y_b by construction, so evaluate it exactly
    # (both paths post-jump when the endpoint is a matched jump pair)
    d_end = abs(
        eval_path(p, min(x_b, p.horizon)) - eval_path(q, min(y_b, q.horizon))
    )
    return max(best, d_end)


def _matchable(path, R):
    idx = [i for i, e in enumerate(path.epochs) if 0.0 < e <= R]
    return [(float(path.epochs[i]), i) for i in idx]


def j1_distance(p: StepPath, q: StepPath, R: float | None = None) -> float:
    """Upper bound on the Skorokhod J1 distance between two step paths on [0, R].

    Searches all order-preserving matchings of jump epochs, realizing each
    matching by the piecewise-linear time change through the matched pairs,
    and keeps Pareto fronts of (slope penalty, sup-norm penalty) so the
    search is exact over matchings.  The identity time change (empty
    matching) is always admissible, so the result never exceeds the uniform
    distance.  Diagnostic only; the uniform closeness statements used by the
    statistical tests are finite-dimensional.
    """
    if R is None:
        if abs(p.horizon - q.horizon) > 1e-12:
            raise DomainError("paths have different horizons; pass R explicitly")
        R = min(p.horizon, q.horizon)
    R = float(R)
    if R > min(p.horizon, q.horizon) * (1.0 + 1e-12):
        raise DomainError("R exceeds a path horizon")
    pj = _matchable(p, R)
    qj = _matchable(q, R)
    nm = len(pj)
    nq = len(qj)

    # fronts[(i, j)] = list of (slope_pen, value_pen) for partial matchings whose
    # last matched pair is (pj[i], qj[j]); (-1, -1) is the virtual start at (0, 0).
    def _push(front, item):
        s, v = item
        kept = []
        for fs, fv in front:
            if fs <= s and fv <= v:
                return front
            if not (s <= fs and v <= fv):
                kept.append((fs, fv))
        kept.append((s, v))
        front[:] = kept
        return front

    start = (-1, -1)
    fronts = {start: [(0.0, 0.0)]}
    order = [start] + [(i, j) for i in range(nm) for j in range(nq)]
    best = math.inf
    for key in order:
        if key not in fronts:
            continue
        i0, j0 = key
        x_a = 0.0 if i0 < 0 else pj[i0][0]
        y_a = 0.0 if j0 < 0 else qj[j0][0]
        for front_item in fronts[key]:
            s_pen, v_pen = front_item
            # close the matching: final segment to (R, R)
            if x_a < R and y_a < R:
                sl = abs(math.log((R - y_a) / (R - x_a)))
                vv = _sup_diff_on_segment(p, q, x_a, y_a, R, R)
                total = max(s_pen, sl) + max(v_pen, vv)
            else:
                total = s_pen + max(v_pen, abs(eval_path(p, R) - eval_path(q, R)))
            if total < best:
                best = total
            # extend by one more matched pair
            for i1 in range(i0 + 1, nm):
                x_b = pj[i1][0]
                if x_b <= x_a or x_b >= R:
                    continue
                for j1 in range(j0 + 1, nq):
                    y_b = qj[j1][0]
                    if y_b <= y_a or y_b >= R:
                        continue
                    sl = abs(math.log((y_b - y_a) / (x_b - x_a)))
                    vv = _sup_diff_on_segment(p, q, x_a, y_a, x_b, y_b)
                    item = (max(s_pen, sl), max(v_pen, vv))
                    if item[0] + item[1] < best + 1e-15:
                        _push(fronts.setdefault((i1, j1), []), item)
    return best


# -- serialization -----------------------------------------------------------


def path_to_json(path: StepPath) -> str:
    return json.dumps(
        {
            "horizon": path.horizon,
            "epochs": path.epochs.tolist(),
            "values": path.values.tolist(),
        }
    )


def path_from_json(text: str) -> StepPath:
    obj = json.loads(text)
    return StepPath(obj["horizon"], np.asarray(obj["epochs"]), np.asarray(obj["values"]))


def path_to_csv(path: StepPath) -> str:
    lines = [f"# horizon={path.horizon!r}", "epoch,value"]
    for e, v in zip(path.epochs, path.values):
        lines.append(f"{float(e)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def path_from_csv(text: str) -> StepPath:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# horizon="):
        raise DomainError("missing horizon header line")
    horizon = float(lines[0].split("=", 1)[1])
    epochs, values = [], []
    for ln in lines[1:]:
        if ln.startswith("epoch"):
            continue
        e, v = ln.split(",")
        epochs.append(float(e))
        values.append(float(v))
    return StepPath(horizon, np.asarray(epochs), np.asarray(values))


# -- randomized property suite ------------------------------------------------


def random_step_path(
    rng: np.random.Generator,
    horizon: float = 1.0,
    max_jumps: int = 12,
    allow_atom_at_zero: bool = True,
    min_jumps: int = 0,
) -> StepPath:
    """Random step path with strictly increasing values, for property tests."""
    n = int(rng.integers(min_jumps, max_jumps + 1))
    epochs = np.sort(rng.uniform(0.0, horizon, n))
    epochs = np.unique(epochs)
    epochs = epochs[epochs > 0.0]
    if allow_atom_at_zero and rng.random() < 0.25:
        epochs = np.concatenate(([0.0], epochs))
    sizes = rng.exponential(1.0, epochs.size) + 1e-9
    return StepPath(horizon, epochs, np.cumsum(sizes))


def run_selftest(n_paths: int = 10_000, seed: int = 20240801, j1_pairs: int | None = None) -> dict:
    """Randomized check of the path-calculus invariants.

    Returns a dict with per-property pass counts; raises AssertionError on
    the first violated invariant.  Used by the CLI selftest experiment and
    the acceptance suite.
    """
    rng = np.random.default_rng(seed)
    tol = 1e-9
    counts = {
        "involution": 0,
        "semiflow": 0,
        "scaling": 0,
        "sandwich": 0,
        "tie_down_endpoint": 0,
        "stieltjes_mass": 0,
        "j1": 0,
    }
    if j1_pairs is None:
        j1_pairs = max(200, n_paths // 10)
    for k in range(n_paths):
        path = random_step_path(rng, horizon=1.0 + rng.random())
        r = path.horizon

        if np.any(path.epochs > 0.0):
            # involution at continuity points; an atom-only path inverts to the
            # zero path and cannot be inverted back (censored at the origin)
            inv = inverse(path)
            back = inverse(inv)
            ts = rng.uniform(0.0, back.horizon, 5)
            ts = ts[np.all(np.abs(ts[:, None] - path.epochs[None, :]) > 1e-9, axis=1)]
            if ts.size:
                assert np.allclose(eval_path(back, ts), eval_path(path, ts), atol=tol), (
                    f"involution failed on path #{k}"
                )
            counts["involution"] += 1

        # semiflow law
        s = rng.uniform(0.0, 0.5 * r)
        u = rng.uniform(0.0, 0.4 * r)
        two = increment_shift(increment_shift(path, s), u)
        one = increment_shift(path, s + u)
        assert np.allclose(two.epochs, one.epochs, atol=tol) and np.allclose(
            two.values, one.values, atol=tol
        ), f"semiflow law failed on path #{k}"
        counts["semiflow"] += 1

        # scaling composition
        a, b, gm = 0.5 + rng.random(), 0.5 + rng.random(), 0.2 + 0.6 * rng.random()
        lhs = scale(scale(path, a, gm), b, gm)
        rhs = scale(path, a * b, gm)
        assert abs(lhs.horizon - rhs.horizon) < tol and np.allclose(
            lhs.values, rhs.values, atol=tol
        ), f"scaling composition failed on path #{k}"
        counts["scaling"] += 1

        # waiting-time sandwich
        t = rng.uniform(0.0, r * 0.999)
        g = waiting_G(path, t)
        d = waiting_D(path, t)
        assert g <= t <= d.time + tol, f"sandwich failed on path #{k}"
        mid = 0.5 * (g + min(d.time, r))
        assert abs(eval_path(path, max(g, 0.0)) - eval_path(path, mid)) < tol or d.time <= g, (
            f"flatness on [G, D) failed on path #{k}"
        )
        counts["sandwich"] += 1

        # tie-down endpoint
        if np.any((path.epochs > 0.0) & (path.epochs <= 1.0)) and r >= 1.0:
            td = tie_down(path, gm)
            assert td.epochs.size and td.epochs[-1] == 1.0, (
                f"tie_down endpoint failed on path #{k}"
            )
            counts["tie_down_endpoint"] += 1

        # stieltjes with g == 1 returns the path increment exactly
        if r >= 1.0:
            eps = 0.1 + 0.3 * rng.random()
            val = stieltjes_functional(lambda _zeta: 1.0, path, gm, eps)
            ref = eval_path(path, 1.0) - eval_path(path, eps)
            assert abs(val - ref) < 1e-12 * (1.0 + abs(ref)), (
                f"stieltjes mass failed on path #{k}"
            )
            counts["stieltjes_mass"] += 1

        # J1 properties on a subsample with few jumps (DP cost grows quickly)
        if k < j1_pairs:
            pa = random_step_path(rng, horizon=1.0, max_jumps=4)
            pb = random_step_path(rng, horizon=1.0, max_jumps=4)
            dab = j1_distance(pa, pb)
            dba = j1_distance(pb, pa)
            sup = float(
                np.max(
                    np.abs(
                        eval_path(pa, np.linspace(0, 1, 64))
                        - eval_path(pb, np.linspace(0, 1, 64))
                    )
                )
            )
            assert abs(dab - dba) < 1e-9, f"j1 symmetry failed on pair #{k}"
            assert j1_distance(pa, pa) == 0.0, f"j1 identity failed on pair #{k}"
            # sampled sup-norm is a lower bound on the true uniform distance
            assert dab <= max(sup, _true_uniform_distance(pa, pb)) + 1e-9, (
                f"j1 exceeded uniform distance on pair #{k}"
            )
            counts["j1"] += 1
    return counts


def _true_uniform_distance(p: StepPath, q: StepPath) -> float:
    pts = np.unique(np.concatenate((p.epochs, q.epochs, [0.0, min(p.horizon, q.horizon)])))
    pts = pts[pts <= min(p.horizon, q.horizon)]
    return float(np.max(np.abs(eval_path(p, pts) - eval_path(q, pts))))
