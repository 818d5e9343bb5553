"""Shared numeric plumbing: bracketed root finding, bounded scalar
maximization and bound-constrained least squares.

The heavy lifting is delegated to scipy (Brent's method, dogbox trust
region); this module pins down brackets, tolerances and failure modes so
the rest of the package gets deterministic behaviour and typed errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import (
    DomainError,
    InfeasibleStart,
    MaxIterations,
    NoBracketFound,
    NoSignChange,
)

#: Absolute x tolerance used for quantities that sit on domain boundaries.
DEFAULT_X_TOL = 1e-12

_MAX_ROOT_ITER = 200
_MAX_EXPANSIONS = 100
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Bracket:
    """An interval [lo, hi] certified to contain a sign change of f."""

    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise NoSignChange(f"bracket endpoints out of order: [{self.lo}, {self.hi}]")
        if not (math.isfinite(self.f_lo) and math.isfinite(self.f_hi)):
            raise NoSignChange("bracket endpoint values must be finite")
        if self.f_lo * self.f_hi >= 0.0:
            raise NoSignChange(
                f"no sign change over [{self.lo}, {self.hi}]: "
                f"f(lo)={self.f_lo}, f(hi)={self.f_hi}"
            )


@dataclass(frozen=True)
class LsqOptions:
    """Termination controls for least_squares_bounded.

    The tolerance defaults are machine epsilon, which in practice means the
    solver runs until progress stalls or ``max_evals`` is exhausted.
    """

    f_tol: float = field(default_factory=lambda: float(np.finfo(float).eps))
    x_tol: float = field(default_factory=lambda: float(np.finfo(float).eps))
    g_tol: float = field(default_factory=lambda: float(np.finfo(float).eps))
    max_evals: int = 1000


def bracket_root(f: Callable[[float], float], lo: float, hi: float) -> Bracket:
    """Evaluate f at both endpoints and certify the bracket."""
    return Bracket(lo, hi, f(lo), f(hi))


def find_root(f: Callable[[float], float], bracket: Bracket, tol: float = DEFAULT_X_TOL) -> float:
    """Locate the root of f inside a certified bracket with Brent's method.

    Converges when the interval width falls below ``tol`` in the combined
    absolute/relative sense used by Brent iterations.  Deterministic for a
    given (f, bracket, tol).
    """
    if tol <= 0.0:
        raise DomainError(f"tol must be positive, got {tol}")
    rtol = max(tol, 4.0 * float(np.finfo(float).eps))
    try:
        root = brentq(f, bracket.lo, bracket.hi, xtol=tol, rtol=rtol,
                      maxiter=_MAX_ROOT_ITER, disp=True)
    except ValueError as exc:
        raise NoSignChange(str(exc)) from exc
    except RuntimeError as exc:
        raise MaxIterations(
            f"root not found within {_MAX_ROOT_ITER} iterations in "
            f"[{bracket.lo}, {bracket.hi}]"
        ) from exc
    return float(root)


def expand_bracket(
    f: Callable[[float], float],
    start: float,
    direction: int,
    growth: float = 2.0,
    initial_step: float = 1.0,
) -> Bracket:
    """Walk geometrically from ``start`` until a sign change is straddled.

    ``direction`` is +1 (rightward) or -1 (leftward).  The bracket returned
    is the last probed sub-interval, so it is as tight as the stepping
    allows.  Raises NoBracketFound after the expansion budget is spent.
    """
    if direction not in (-1, 1):
        raise DomainError(f"direction must be +1 or -1, got {direction}")
    if growth <= 1.0:
        raise DomainError(f"growth must exceed 1, got {growth}")
    x_prev = float(start)
    f_prev = f(x_prev)
    if not math.isfinite(f_prev):
        raise DomainError(f"f(start) is not finite at start={start}")
    step = float(initial_step)
    for _ in range(_MAX_EXPANSIONS):
        x_next = x_prev + direction * step
        f_next = f(x_next)
        if not math.isfinite(f_next):
            raise DomainError(f"f({x_next}) is not finite during bracket expansion")
        if f_next == 0.0:
            # Exact zero at a probe: nudge past it so the bracket is strict.
            x_past = x_next + direction * max(abs(x_next), 1.0) * 1e-9
            f_past = f(x_past)
            if f_prev * f_past < 0.0:
                x_next, f_next = x_past, f_past
            else:
                x_prev, f_prev = x_past, f_past
                step *= growth
                continue
        if f_prev * f_next < 0.0:
            if direction > 0:
                return Bracket(x_prev, x_next, f_prev, f_next)
            return Bracket(x_next, x_prev, f_next, f_prev)
        x_prev, f_prev = x_next, f_next
        step *= growth
    raise NoBracketFound(
        f"no sign change within {_MAX_EXPANSIONS} expansions from {start} "
        f"(direction {direction:+d})"
    )


def golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = DEFAULT_X_TOL,
) -> tuple[float, float]:
    """Golden-section search for a maximum of f on [lo, hi].

    Only interior points are probed, so the endpoints may be singular.
    Returns (argmax, max).  Unimodality is the caller's responsibility; on a
    non-unimodal stretch the result is still a local maximum candidate.
    """
    a, b = float(lo), float(hi)
    if not a < b:
        raise DomainError(f"empty interval [{lo}, {hi}]")
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    _require_finite(fc, c)
    _require_finite(fd, d)
    best_x, best_v = (c, fc) if fc >= fd else (d, fd)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            _require_finite(fc, c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            _require_finite(fd, d)
        if fc > best_v:
            best_x, best_v = c, fc
        if fd > best_v:
            best_x, best_v = d, fd
    return best_x, best_v


def maximize_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    n_grid: int = 64,
    tol: float = DEFAULT_X_TOL,
) -> tuple[float, float]:
    """Maximize f over the open interval (lo, hi).

    Scans an ``n_grid``-point interior grid, then refines around the best
    grid point with golden-section search.  The result is never worse than
    the best grid value.  Non-finite evaluations raise DomainError.
    """
    if n_grid < 3:
        raise DomainError(f"n_grid must be at least 3, got {n_grid}")
    if not lo < hi:
        raise DomainError(f"empty interval [{lo}, {hi}]")
    xs = _interior_grid(lo, hi, n_grid)
    vals = []
    for x in xs:
        v = f(x)
        _require_finite(v, x)
        vals.append(v)
    i_best = max(range(n_grid), key=vals.__getitem__)
    x_best, v_best = xs[i_best], vals[i_best]
    win_lo = xs[i_best - 1] if i_best > 0 else lo
    win_hi = xs[i_best + 1] if i_best < n_grid - 1 else hi
    x_ref, v_ref = golden_section_max(f, win_lo, win_hi, tol)
    if v_ref > v_best:
        return x_ref, v_ref
    return x_best, v_best


def _interior_grid(lo: float, hi: float, n: int) -> list[float]:
    h = (hi - lo) / n
    return [lo + (i + 0.5) * h for i in range(n)]


def _require_finite(value: float, x: float) -> None:
    if not math.isfinite(value):
        raise DomainError(f"objective is not finite at x={x}")


def least_squares_bounded(
    residuals: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    lower: Sequence[float],
    upper: Sequence[float],
    opts: LsqOptions | None = None,
) -> tuple[np.ndarray, float, bool]:
    """Bound-constrained nonlinear least squares.

    Runs a dogbox trust-region iteration with a forward-difference Jacobian;
    every residual evaluation, including differencing, stays inside
    [lower, upper].  Returns (x, cost, converged) with cost = 0.5*||r||^2.
    When the evaluation budget runs out the best point found is returned
    with converged=False rather than raising.
    """
    if opts is None:
        opts = LsqOptions()
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise InfeasibleStart(f"start point {x0.tolist()} violates bounds")
    result = least_squares(
        residuals,
        x0,
        jac="2-point",
        bounds=(lower, upper),
        method="dogbox",
        ftol=opts.f_tol,
        xtol=opts.x_tol,
        gtol=opts.g_tol,
        max_nfev=opts.max_evals,
    )
    converged = result.status > 0
    return result.x, float(result.cost), bool(converged)
