"""Arbitrage-free smile calibration over the free-domain box.

Least squares runs on total variances in the box coordinates
(rho, b', u, q, v), so every iterate corresponds to a butterfly-free smile
and no penalty terms or post-hoc repairs are needed.  Multi-start with a
seeded generator keeps the whole procedure deterministic.

The box-to-smile pipeline evaluates the threshold, the shift interval and
the curvature floor; those are memoized on quantized keys because the
finite-difference Jacobian perturbs one coordinate at a time and most of
the pipeline is unchanged for the coordinates downstream of the
perturbation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .black_scholes import d1_d2, norm_pdf
from .domain import (
    ArbitrageDiagnostic,
    BoxCoords,
    Status,
    check_no_arbitrage,
    g2_zeros,
    params_to_box,
    _sigma_star_trusted,
)
from .errors import (
    ButterfreeError,
    InsufficientData,
    InvalidInput,
    NoConvergedStart,
    NumericFailure,
)
from .fukasawa import fukasawa_threshold, mu_interval
from .numerics import LsqOptions, least_squares_bounded
from .svi import SviParams

#: Margin keeping box samples off the open boundaries of the rectangle.
_EDGE = 1e-6

#: Floor for the effective alpha margin once the cap clamp is applied.
_U_FLOOR = 1e-9

#: Quantization grid for memo keys; well below the finite-difference step.
_KEY_GRID = 1e10


@dataclass(frozen=True)
class MarketSlice:
    """One maturity of market total variances on a log-forward strike grid.

    w_bid and w_ask may carry NaN where a side was missing or not
    invertible; w_mid must be positive everywhere and k strictly
    increasing.
    """

    k: np.ndarray
    w_mid: np.ndarray
    w_bid: np.ndarray | None = None
    w_ask: np.ndarray | None = None
    t: float | None = None
    forward: float | None = None
    discount: float | None = None
    expiry: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        object.__setattr__(self, "w_mid", np.asarray(self.w_mid, dtype=float))
        if self.k.ndim != 1 or self.k.size == 0:
            raise InvalidInput("k must be a non-empty one-dimensional array")
        if self.w_mid.shape != self.k.shape:
            raise InvalidInput("w_mid must match the shape of k")
        if not np.all(np.isfinite(self.k)):
            raise InvalidInput("k must be finite")
        if np.any(np.diff(self.k) <= 0.0):
            raise InvalidInput("k must be strictly increasing")
        if not np.all(np.isfinite(self.w_mid)) or np.any(self.w_mid <= 0.0):
            raise InvalidInput("w_mid must be finite and positive")
        for name in ("w_bid", "w_ask"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != self.k.shape:
                raise InvalidInput(f"{name} must match the shape of k")
        if self.w_bid is not None:
            ok = np.isnan(self.w_bid) | (self.w_bid <= self.w_mid)
            if not np.all(ok):
                raise InvalidInput("w_bid must not exceed w_mid")
        if self.w_ask is not None:
            ok = np.isnan(self.w_ask) | (self.w_ask >= self.w_mid)
            if not np.all(ok):
                raise InvalidInput("w_ask must not fall below w_mid")
        for name in ("t", "forward", "discount"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise InvalidInput(f"{name} must be positive, got {value}")

    def __len__(self) -> int:
        return int(self.k.size)


@dataclass(frozen=True)
class CalibrationConfig:
    """Knobs of the multi-start box calibration.

    alpha_cap bounds the normalized level a/sigma; around 1 is plenty for
    index smiles, raise it for synthetic or long-dated data.  r controls
    the sigma ceiling max(|k_first|, |k_last|)/r.
    """

    n_starts: int = 8
    seed: int = 0
    r: float = 0.1
    alpha_cap: float = 1.0
    vega_weighted: bool = False
    lsq: LsqOptions = field(default_factory=LsqOptions)

    def __post_init__(self) -> None:
        if self.n_starts < 1:
            raise InvalidInput(f"n_starts must be at least 1, got {self.n_starts}")
        if not self.r > 0.0:
            raise InvalidInput(f"r must be positive, got {self.r}")
        if not self.alpha_cap > 0.0:
            raise InvalidInput(f"alpha_cap must be positive, got {self.alpha_cap}")


@dataclass(frozen=True)
class StartResult:
    """Outcome of one start: where it began, where it stopped, and the cost."""

    index: int
    x0: tuple[float, ...]
    x: tuple[float, ...] | None
    cost: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class CalibrationResult:
    params: SviParams
    box: BoxCoords
    cost: float
    rel_error_fro: float
    diagnostic: ArbitrageDiagnostic
    starts: tuple[StartResult, ...]
    wall_time: float


def sigma_upper_bound(slice_: MarketSlice, sigma_star: float, r: float) -> float:
    """Ceiling for sigma: the observed strike span scaled by 1/r, never
    below 1.5 times the curvature floor."""
    if not r > 0.0:
        raise InvalidInput(f"r must be positive, got {r}")
    return max(abs(float(slice_.k[0])) / r, abs(float(slice_.k[-1])) / r, 1.5 * sigma_star)


def vega_weights(slice_: MarketSlice) -> np.ndarray:
    """Black-Scholes total-vol vegas of the mid quotes, used as residual
    weights; computed once from the data, not from the model."""
    out = np.empty(len(slice_))
    for i, (k, w) in enumerate(zip(slice_.k, slice_.w_mid)):
        d1, _ = d1_d2(float(k), math.sqrt(float(w)))
        out[i] = norm_pdf(d1)
    return out


class _Pipeline:
    """Box -> smile mapping with quantized memoization.

    The cap on alpha is enforced by clamping the margin u inside the
    mapping, which keeps the solver rectangle fixed while guaranteeing
    alpha <= alpha_cap for every evaluated point.
    """

    def __init__(self, alpha_cap: float) -> None:
        self.alpha_cap = alpha_cap
        self._threshold: dict = {}
        self._interval: dict = {}
        self._zeros: dict = {}
        self._floor: dict = {}

    def raw(
        self, x: np.ndarray, exact: bool = False
    ) -> tuple[float, float, float, float, float, float]:
        """Return (a, b, rho, m, sigma, u_eff) for box coordinates x.

        With exact=True the quantized memo is bypassed, so the output is
        computed for exactly these coordinates; used for the final rebuild,
        where a floor borrowed from a neighbouring key could leave sigma a
        hair below the recomputed sigma_star.
        """
        rho, b_prime, u, q, v = (float(c) for c in x)
        b = b_prime * 2.0 / (1.0 + abs(rho))
        kf = (round(b * _KEY_GRID), round(rho * _KEY_GRID))
        threshold = None if exact else self._threshold.get(kf)
        if threshold is None:
            threshold = fukasawa_threshold(b, rho)
            self._threshold[kf] = threshold
        u_eff = min(u, self.alpha_cap - threshold)
        if u_eff < _U_FLOOR:
            u_eff = min(u, _U_FLOOR)
        alpha = threshold + u_eff
        ki = kf + (round(alpha * _KEY_GRID),)
        interval = None if exact else self._interval.get(ki)
        if interval is None:
            interval = mu_interval(alpha, b, rho)
            self._interval[ki] = interval
        mu = 0.5 * (1.0 + q) * interval.upper + 0.5 * (1.0 - q) * interval.lower
        zeros = None if exact else self._zeros.get(ki)
        if zeros is None:
            zeros = g2_zeros(alpha, b, rho)
            self._zeros[ki] = zeros
        ks = ki + (round(mu * _KEY_GRID),)
        floor = None if exact else self._floor.get(ks)
        if floor is None:
            floor = _sigma_star_trusted(alpha, b, rho, mu, zeros)
            self._floor[ks] = floor
        sigma = floor + v
        return alpha * sigma, b, rho, mu * sigma, sigma, u_eff


def _quasi_explicit_guess(
    k: np.ndarray, w_mid: np.ndarray, weights: np.ndarray
) -> SviParams:
    """Coarse smile fit by scanning (m, sigma) and solving the inner
    linear problem in (a, b*rho, b) exactly.

    For fixed shift and curvature scale the smile is linear in the
    remaining three parameters, so a modest outer grid plus least squares
    gives a start that already matches the data's level, slope and
    asymmetry.  The output may violate the free-domain conditions; the
    caller projects it into the box.
    """
    span = float(k[-1] - k[0])
    best = None
    for m in np.linspace(k[0] - span, k[-1] + span, 41):
        dk = k - m
        for sigma in np.geomspace(5e-3, 3.0, 25):
            cols = np.column_stack(
                [np.ones_like(k), dk, np.sqrt(dk * dk + sigma * sigma)]
            )
            sol, *_ = np.linalg.lstsq(cols * weights[:, None], w_mid * weights, rcond=None)
            resid = cols @ sol - w_mid
            cost = float(np.dot(resid * weights, resid * weights))
            if best is None or cost < best[0]:
                best = (cost, float(m), float(sigma), sol)
    _, m, sigma, (a, c, d) = best
    b = max(float(d), 1e-9)
    rho = min(max(float(c) / b, -1.0 + _EDGE), 1.0 - _EDGE)
    # keep the smile valid even if the linear part dipped below the floor
    a = max(float(a), -b * sigma * math.sqrt(1.0 - rho * rho) + 1e-12)
    return SviParams(a=a, b=b, rho=rho, m=m, sigma=sigma)


def _natural_polish(
    k: np.ndarray, w_mid: np.ndarray, weights: np.ndarray, guess: SviParams
) -> SviParams:
    """Refine the coarse guess by unconstrained-smile least squares.

    The raw parameter space has none of the box chart's warping, so a few
    dozen cheap iterations land on the natural optimum; the result may sit
    outside the free domain and is only ever used after projection.
    """
    span = float(k[-1] - k[0])
    w_scale = float(np.max(w_mid))
    lo = np.array([-10.0 * w_scale, 0.0, -1.0 + _EDGE, float(k[0]) - 2.0 * span, 1e-4])
    hi = np.array([10.0 * w_scale, 4.0, 1.0 - _EDGE, float(k[-1]) + 2.0 * span, 10.0])
    x0 = np.clip(
        np.array([guess.a, guess.b, guess.rho, guess.m, guess.sigma]), lo, hi
    )

    def residuals(x: np.ndarray) -> np.ndarray:
        a, b, rho, m, sigma = x
        dk = k - m
        return (a + b * (rho * dk + np.sqrt(dk * dk + sigma * sigma)) - w_mid) * weights

    from scipy.optimize import least_squares

    fit = least_squares(
        residuals, x0, bounds=(lo, hi), method="dogbox", jac="2-point",
        ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=400,
    )
    a, b, rho, m, sigma = (float(c) for c in fit.x)
    b = max(b, 1e-9)
    a = max(a, -b * sigma * math.sqrt(1.0 - rho * rho) + 1e-12)
    return SviParams(a=a, b=b, rho=rho, m=m, sigma=sigma)


def _project_into_box(
    params: SviParams,
    pipeline: _Pipeline,
    u_max: float,
    v_max: float,
) -> np.ndarray:
    """Box coordinates whose image is the closest expressible free smile.

    Each coordinate is clipped into its rectangle; q keeps a margin of a
    thousandth of the interval width because sigma_star blows up against
    the walls.
    """
    sigma = max(params.sigma, 1e-6)
    alpha = params.a / sigma
    mu = params.m / sigma
    b = params.b
    rho = min(max(params.rho, -1.0 + _EDGE), 1.0 - _EDGE)
    b_prime = min(max(b * (1.0 + abs(rho)) / 2.0, _EDGE), 1.0)
    b = b_prime * 2.0 / (1.0 + abs(rho))
    threshold = fukasawa_threshold(b, rho)
    u = min(max(alpha - threshold, _EDGE), u_max)
    u_eff = min(u, pipeline.alpha_cap - threshold)
    if u_eff < _U_FLOOR:
        u_eff = min(u, _U_FLOOR)
    interval = mu_interval(threshold + u_eff, b, rho)
    q = (2.0 * mu - interval.upper - interval.lower) / interval.width()
    q = min(max(q, -1.0 + 1e-3), 1.0 - 1e-3)
    mu_eff = 0.5 * (1.0 + q) * interval.upper + 0.5 * (1.0 - q) * interval.lower
    zeros = g2_zeros(threshold + u_eff, b, rho)
    floor = _sigma_star_trusted(threshold + u_eff, b, rho, mu_eff, zeros)
    v = min(max(sigma - floor, 0.0), v_max)
    return np.array([rho, b_prime, u, q, v])


def calibrate(slice_: MarketSlice, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Fit an arbitrage-free smile to one maturity of total variances.

    Draws ``n_starts`` uniform box starts plus one deterministic
    quasi-explicit start, polishes each with bounded least squares on the
    (optionally vega-weighted) total-variance residuals, and keeps the
    lowest cost.  Starts that exhaust their evaluation budget still report
    their best point; only starts that die outright are discarded, and
    NoConvergedStart is raised if none survive.
    """
    if config is None:
        config = CalibrationConfig()
    if len(slice_) < 5:
        raise InsufficientData(
            f"need at least 5 strikes to identify 5 parameters, got {len(slice_)}"
        )
    t_begin = time.perf_counter()
    k = slice_.k
    w_mid = slice_.w_mid
    weights = vega_weights(slice_) if config.vega_weighted else np.ones(len(slice_))

    v_max = sigma_upper_bound(slice_, 0.0, config.r)
    u_max = config.alpha_cap + 2.0
    lower = np.array([-1.0 + _EDGE, _EDGE, _EDGE, -1.0 + _EDGE, 0.0])
    upper = np.array([1.0 - _EDGE, 1.0, u_max, 1.0 - _EDGE, v_max])

    pipeline = _Pipeline(config.alpha_cap)

    def residuals(x: np.ndarray) -> np.ndarray:
        a, b, rho, m, sigma, _ = pipeline.raw(x)
        dk = k - m
        w_model = a + b * (rho * dk + np.sqrt(dk * dk + sigma * sigma))
        return (w_model - w_mid) * weights

    rng = np.random.default_rng(config.seed)
    x0s = list(rng.uniform(lower, upper, size=(config.n_starts, 5)))
    try:
        guess = _quasi_explicit_guess(k, w_mid, weights)
        guess = _natural_polish(k, w_mid, weights, guess)
        x0s.append(
            np.clip(_project_into_box(guess, pipeline, u_max, v_max), lower, upper)
        )
    except ButterfreeError:
        pass  # the uniform starts still run

    starts: list[StartResult] = []
    for i, x0 in enumerate(x0s):
        try:
            x, cost, converged = least_squares_bounded(
                residuals, x0, lower, upper, config.lsq
            )
        except ButterfreeError as exc:
            starts.append(
                StartResult(i, tuple(x0), None, math.inf, False, error=str(exc))
            )
            continue
        starts.append(StartResult(i, tuple(x0), tuple(x), float(cost), converged))

    usable = [s for s in starts if s.x is not None]
    if not usable:
        raise NoConvergedStart(
            "every calibration start failed: "
            + "; ".join(s.error or "?" for s in starts)
        )
    best = min(usable, key=lambda s: (s.cost, s.index))

    x_best = np.asarray(best.x)
    a, b, rho, m, sigma, u_eff = pipeline.raw(x_best, exact=True)
    params = SviParams(a=a, b=b, rho=rho, m=m, sigma=sigma)
    diagnostic = check_no_arbitrage(params)
    # Rebuilding (a, m) from (alpha, mu) and back moves alpha = a/sigma by an
    # ulp or two; when v sits on its zero bound that can land sigma just
    # under the recertified floor.  Nudge sigma up by a growing hair until
    # the certificate holds; one pass suffices in practice.
    margin = 1e-12
    while diagnostic.status is Status.FAILURE4 and margin <= 1e-8:
        sigma_up = diagnostic.sigma_star * (1.0 + margin)
        params = SviParams(
            a=params.a / params.sigma * sigma_up,
            b=b,
            rho=rho,
            m=params.m / params.sigma * sigma_up,
            sigma=sigma_up,
        )
        diagnostic = check_no_arbitrage(params)
        margin *= 100.0
    if not diagnostic.is_free:
        raise NumericFailure(
            f"calibrated smile failed the free-domain certificate: "
            f"{diagnostic.status.value}"
        )
    box = params_to_box(params)
    a, b, rho, m, sigma = params.a, params.b, params.rho, params.m, params.sigma
    dk = k - m
    w_model = a + b * (rho * dk + np.sqrt(dk * dk + sigma * sigma))
    rel = float(np.linalg.norm(w_model - w_mid) / np.linalg.norm(w_mid))
    return CalibrationResult(
        params=params,
        box=box,
        cost=best.cost,
        rel_error_fro=rel,
        diagnostic=diagnostic,
        starts=tuple(starts),
        wall_time=time.perf_counter() - t_begin,
    )
