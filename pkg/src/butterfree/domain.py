"""Full butterfly-arbitrage classification and the free-domain box.

The diagnostic g(k) of a positive SVI smile splits in normalized
coordinates as G(l) = G1(l) + G2(l)/(2*sigma).  The waterfall below checks,
in order:

  1. wing slopes b*(1 -+ rho) <= 2, otherwise arbitrage regardless of the
     remaining parameters (failure type 1);
  2. alpha > F(b, rho), the threshold that keeps a shift interval open
     (type 2);
  3. mu strictly inside that interval, which makes G1 > 0 everywhere
     (type 3);
  4. sigma >= sigma_star(alpha, b, rho, mu), the smallest curvature scale
     for which the negative tails of G2 cannot drag G below zero (type 4).

Surviving all four steps is equivalent to g >= 0 on the whole line.  The
same four quantities give a bijection between the strictly free region and
a simple box (rho, b', u, q, v), which is what the calibrator optimizes
over: every box point maps to an arbitrage-free smile by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSigma, DomainError, FukasawaViolated, NotInDomain
from .fukasawa import MuInterval, fukasawa_threshold, l_star, mu_interval
from .numerics import expand_bracket, find_root, golden_section_max
from .svi import NormalizedParams, SviParams, denormalize, n_funcs, normalize

#: Tolerance on the strict wing-slope inequality; values within this of the
#: limit 2 are routed to the boundary-regime interval formulas instead.
SLOPE_TOL = 1e-12

#: Grid size per reciprocal side used to locate the tail supremum.
_PROFILE_GRID = 64
_REFINE_CANDIDATES = 3
#: Golden-section width target for the refinement stage; the profile is
#: locally quadratic so the value is accurate to roughly the square of this.
_REFINE_TOL = 1e-9
#: Ceiling on the tail deficit.  G1 can round to zero when mu sits within a
#: few ulp of an interval wall; capping keeps the calibrator's residuals
#: finite there instead of propagating an infinity.
_PROFILE_CAP = 1e12


class Status(enum.Enum):
    """Outcome of the waterfall; the numbers match the failure types."""

    FREE = "Free"
    FAILURE1 = "Failure1"
    FAILURE2 = "Failure2"
    FAILURE3 = "Failure3"
    FAILURE4 = "Failure4"


@dataclass(frozen=True)
class G2Zeros:
    """The two roots of the curvature excess G2; G2 > 0 strictly between.

    At rho = -1 the right root escapes to +inf (G2 stays positive on the
    right tail); symmetrically for rho = +1.
    """

    l1: float
    l2: float


@dataclass(frozen=True)
class ArbitrageDiagnostic:
    """Waterfall verdict plus every quantity computed on the way down."""

    status: Status
    params: SviParams
    slope_left: float
    slope_right: float
    alpha: float | None = None
    mu: float | None = None
    threshold: float | None = None
    interval: MuInterval | None = None
    sigma_star: float | None = None
    message: str = ""

    @property
    def is_free(self) -> bool:
        return self.status is Status.FREE

    @property
    def exit_code(self) -> int:
        """Shell-friendly mapping: Free -> 0, failure type n -> n + 1."""
        if self.status is Status.FREE:
            return 0
        return int(self.status.value[-1]) + 1


@dataclass(frozen=True)
class BoxCoords:
    """Free-domain box coordinates.

    rho and q live in (-1, 1), b' in (0, 1], u > 0 and v >= 0.  b' rescales
    the larger wing slope to its admissible range, u is the margin of alpha
    over the threshold, q the relative position of mu inside its interval
    and v the margin of sigma over sigma_star.
    """

    rho: float
    b_prime: float
    u: float
    q: float
    v: float

    def __post_init__(self) -> None:
        values = (self.rho, self.b_prime, self.u, self.q, self.v)
        if not all(math.isfinite(x) for x in values):
            raise NotInDomain(f"box coordinates must be finite, got {values}")
        if not -1.0 < self.rho < 1.0:
            raise NotInDomain(f"rho must lie in (-1, 1), got {self.rho}")
        if not 0.0 < self.b_prime <= 1.0:
            raise NotInDomain(f"b' must lie in (0, 1], got {self.b_prime}")
        if not self.u > 0.0:
            raise NotInDomain(f"u must be positive, got {self.u}")
        if not -1.0 < self.q < 1.0:
            raise NotInDomain(f"q must lie in (-1, 1), got {self.q}")
        if self.v < 0.0:
            raise NotInDomain(f"v must be non-negative, got {self.v}")


def g2_zeros(alpha: float, b: float, rho: float) -> G2Zeros:
    """Roots of G2(l) = N''(l) - N'(l)^2/(2 N(l)).

    G2 has the sign of q(l) = 2*alpha/b + (2 - l^2)*sqrt(l^2+1)
    - rho^2*(l^2+1)^(3/2) - 2*rho*l^3, positive at both the vertex and the
    origin and negative in the tails, with exactly one root on each side
    (the matching tail vanishes at |rho| = 1 and the root moves to
    infinity).
    """
    if b <= 0.0:
        raise DomainError(f"b must be positive, got {b}")
    if abs(rho) > 1.0:
        raise DomainError(f"rho must lie in [-1, 1], got {rho}")
    min_n = alpha + b * math.sqrt(1.0 - rho * rho)
    # At |rho| = 1 the infimum is reached only in the wing limit, so the
    # smile stays positive at every finite l as long as alpha >= 0.
    if (abs(rho) < 1.0 and min_n <= 0.0) or (abs(rho) == 1.0 and alpha < 0.0):
        raise DomainError(
            "g2_zeros requires a positive smile: "
            f"alpha + b*sqrt(1-rho^2) = {min_n}"
        )
    level = 2.0 * alpha / b

    def q(l: float) -> float:
        r2 = l * l + 1.0
        r = math.sqrt(r2)
        return level + (2.0 - l * l) * r - rho * rho * r2 * r - 2.0 * rho * l**3

    if abs(rho) < 1.0:
        anchor = l_star(rho)
    else:
        anchor = 0.0
    left_anchor = min(anchor, 0.0)
    right_anchor = max(anchor, 0.0)
    if rho == 1.0:
        l1 = -math.inf
    else:
        l1 = find_root(q, expand_bracket(q, left_anchor, -1))
    if rho == -1.0:
        l2 = math.inf
    else:
        l2 = find_root(q, expand_bracket(q, right_anchor, 1))
    return G2Zeros(l1, l2)


def _g1_g2(alpha: float, b: float, rho: float, mu: float, l: float) -> tuple[float, float]:
    n0, n1, n2, _ = n_funcs(alpha, b, rho, l)
    shift = (l + mu) / (2.0 * n0)
    g1 = (1.0 - n1 * (shift + 0.25)) * (1.0 - n1 * (shift - 0.25))
    g2 = n2 - n1 * n1 / (2.0 * n0)
    return g1, g2


def sigma_star_profile(alpha: float, b: float, rho: float, mu: float, h: float) -> float:
    """The tail deficit -G2/(2*G1) at l = 1/h.

    Parametrized by the reciprocal h so each tail beyond a G2 root maps to a
    bounded interval; the profile vanishes toward h -> 0 and at the roots.
    Returns inf where G1 rounds to zero or below, which happens only when mu
    sits essentially on an interval wall.
    """
    if h == 0.0:
        raise DomainError("h must be non-zero")
    g1, g2 = _g1_g2(alpha, b, rho, mu, 1.0 / h)
    if g1 <= 0.0:
        return math.inf
    return -g2 / (2.0 * g1)


def sigma_star(alpha: float, b: float, rho: float, mu: float) -> float:
    """Smallest sigma for which the smile is butterfly free, given that the
    slope factors already pass (types 1-3).

    Equals the supremum of -G2/(2*G1) over the two tails where G2 < 0,
    located on a reciprocal grid with golden-section refinement around the
    best few grid points.  Raises FukasawaViolated when mu is not strictly
    admissible, since G1 must be positive on both tails.
    """
    interval = mu_interval(alpha, b, rho)
    if not interval.contains(mu):
        raise FukasawaViolated(
            f"mu = {mu} is not strictly inside ({interval.lower}, {interval.upper})"
        )
    zeros = g2_zeros(alpha, b, rho)
    return _sigma_star_trusted(alpha, b, rho, mu, zeros)


def sigma_star_with_argmax(
    alpha: float, b: float, rho: float, mu: float
) -> tuple[float, float]:
    """Like sigma_star, additionally reporting the reciprocal coordinate h
    at which the tail deficit peaks; the dangerous log-strike sits at
    l = 1/h."""
    interval = mu_interval(alpha, b, rho)
    if not interval.contains(mu):
        raise FukasawaViolated(
            f"mu = {mu} is not strictly inside ({interval.lower}, {interval.upper})"
        )
    zeros = g2_zeros(alpha, b, rho)
    return _sigma_star_impl(alpha, b, rho, mu, zeros)


def _sigma_star_trusted(
    alpha: float, b: float, rho: float, mu: float, zeros: G2Zeros
) -> float:
    return _sigma_star_impl(alpha, b, rho, mu, zeros)[0]


def _sigma_star_impl(
    alpha: float, b: float, rho: float, mu: float, zeros: G2Zeros
) -> tuple[float, float]:
    def profile(h: float) -> float:
        g1, g2 = _g1_g2(alpha, b, rho, mu, 1.0 / h)
        if g1 <= 0.0:
            return _PROFILE_CAP
        return min(-g2 / (2.0 * g1), _PROFILE_CAP)

    best, h_best = 0.0, math.nan
    if math.isfinite(zeros.l1):
        v, h = _side_max(alpha, b, rho, mu, profile, 1.0 / zeros.l1, 0.0)
        if v > best:
            best, h_best = v, h
    if math.isfinite(zeros.l2):
        v, h = _side_max(alpha, b, rho, mu, profile, 0.0, 1.0 / zeros.l2)
        if v > best:
            best, h_best = v, h
    return best, h_best


def _grid_values(
    alpha: float, b: float, rho: float, mu: float, xs: np.ndarray
) -> np.ndarray:
    l = 1.0 / xs
    r = np.sqrt(l * l + 1.0)
    n0 = alpha + b * (rho * l + r)
    n1 = b * (rho + l / r)
    n2 = b / (r * r * r)
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = (l + mu) / (2.0 * n0)
        g1 = (1.0 - n1 * (shift + 0.25)) * (1.0 - n1 * (shift - 0.25))
        vals = -(n2 - n1 * n1 / (2.0 * n0)) / (2.0 * g1)
    bad = (n0 <= 0.0) | (g1 <= 0.0) | ~np.isfinite(vals)
    return np.where(bad, _PROFILE_CAP, np.minimum(vals, _PROFILE_CAP))


def _side_max(
    alpha: float, b: float, rho: float, mu: float, profile, lo: float, hi: float
) -> tuple[float, float]:
    step = (hi - lo) / _PROFILE_GRID
    xs = lo + (np.arange(_PROFILE_GRID) + 0.5) * step
    vals = _grid_values(alpha, b, rho, mu, xs)
    order = np.argsort(vals)[::-1]
    i_top = int(order[0])
    best, x_best = float(vals[i_top]), float(xs[i_top])
    for i in order[:_REFINE_CANDIDATES]:
        win_lo = float(xs[i - 1]) if i > 0 else lo
        win_hi = float(xs[i + 1]) if i < _PROFILE_GRID - 1 else hi
        x, v = golden_section_max(profile, win_lo, win_hi, tol=_REFINE_TOL)
        if v > best:
            best, x_best = v, x
    return best, x_best


def check_no_arbitrage(params: SviParams) -> ArbitrageDiagnostic:
    """Run the four-step waterfall and report the first failure, if any.

    The parameters themselves must already be a valid smile (the SviParams
    constructor enforces that); sigma = 0 is rejected here because the
    normalized analysis needs a curvature scale.  b = 0 short-circuits to
    Free: a flat smile is plain Black-Scholes.
    """
    if params.sigma <= 0.0:
        raise DegenerateSigma(f"sigma must be positive, got {params.sigma}")
    slope_left = params.b * (1.0 - params.rho)
    slope_right = params.b * (1.0 + params.rho)
    if params.b == 0.0:
        return ArbitrageDiagnostic(
            Status.FREE, params, slope_left, slope_right,
            message="b = 0: flat smile, trivially free",
        )
    norm = normalize(params)
    alpha, b, rho, mu = norm.alpha, norm.b, norm.rho, norm.mu

    if slope_left > 2.0 + SLOPE_TOL or slope_right > 2.0 + SLOPE_TOL:
        return ArbitrageDiagnostic(
            Status.FAILURE1, params, slope_left, slope_right, alpha=alpha, mu=mu,
            message=(
                f"wing slopes b*(1-rho) = {slope_left:.6g}, "
                f"b*(1+rho) = {slope_right:.6g} exceed the limit 2"
            ),
        )

    if abs(rho) == 1.0:
        threshold = 0.0
        if alpha < threshold:
            return ArbitrageDiagnostic(
                Status.FAILURE2, params, slope_left, slope_right,
                alpha=alpha, mu=mu, threshold=threshold,
                message=f"alpha = {alpha:.6g} below the threshold 0 at |rho| = 1",
            )
    else:
        threshold = fukasawa_threshold(b, rho)
        if alpha <= threshold:
            return ArbitrageDiagnostic(
                Status.FAILURE2, params, slope_left, slope_right,
                alpha=alpha, mu=mu, threshold=threshold,
                message=(
                    f"alpha = {alpha:.6g} does not exceed the threshold "
                    f"F(b, rho) = {threshold:.6g}"
                ),
            )

    interval = mu_interval(alpha, b, rho)
    if not interval.contains(mu):
        return ArbitrageDiagnostic(
            Status.FAILURE3, params, slope_left, slope_right,
            alpha=alpha, mu=mu, threshold=threshold, interval=interval,
            message=(
                f"mu = {mu:.6g} outside the open interval "
                f"({interval.lower:.6g}, {interval.upper:.6g})"
            ),
        )

    zeros = g2_zeros(alpha, b, rho)
    s_star = _sigma_star_trusted(alpha, b, rho, mu, zeros)
    if params.sigma < s_star:
        return ArbitrageDiagnostic(
            Status.FAILURE4, params, slope_left, slope_right,
            alpha=alpha, mu=mu, threshold=threshold, interval=interval,
            sigma_star=s_star,
            message=(
                f"sigma = {params.sigma:.6g} below the minimal curvature scale "
                f"sigma_star = {s_star:.6g}"
            ),
        )

    return ArbitrageDiagnostic(
        Status.FREE, params, slope_left, slope_right,
        alpha=alpha, mu=mu, threshold=threshold, interval=interval,
        sigma_star=s_star, message="no butterfly arbitrage",
    )


def box_to_params(box: BoxCoords) -> SviParams:
    """Map box coordinates to raw smile parameters.

    Every point of the box lands strictly inside steps 1-3 of the waterfall
    and at or above the sigma_star floor, so the result is always free of
    butterfly arbitrage.
    """
    norm, _, _, _ = _box_pipeline(box)
    return denormalize(norm)


def _box_pipeline(box: BoxCoords) -> tuple[NormalizedParams, float, MuInterval, float]:
    b = box.b_prime * 2.0 / (1.0 + abs(box.rho))
    threshold = fukasawa_threshold(b, box.rho)
    alpha = threshold + box.u
    interval = mu_interval(alpha, b, box.rho)
    mu = 0.5 * (1.0 + box.q) * interval.upper + 0.5 * (1.0 - box.q) * interval.lower
    zeros = g2_zeros(alpha, b, box.rho)
    s_star = _sigma_star_trusted(alpha, b, box.rho, mu, zeros)
    sigma = s_star + box.v
    norm = NormalizedParams(alpha=alpha, b=b, rho=box.rho, mu=mu, sigma=sigma)
    return norm, threshold, interval, s_star


def params_to_box(params: SviParams) -> BoxCoords:
    """Invert box_to_params on the strictly free region.

    Raises NotInDomain for anything the waterfall does not classify Free,
    for |rho| = 1 (the box keeps rho open) and for b = 0 (no wing scale to
    invert).
    """
    if params.b <= 0.0:
        raise NotInDomain(f"b must be positive to invert, got {params.b}")
    if abs(params.rho) >= 1.0:
        raise NotInDomain(f"|rho| must be below 1 to invert, got {params.rho}")
    diag = check_no_arbitrage(params)
    if not diag.is_free:
        raise NotInDomain(f"parameters are not arbitrage free: {diag.message}")
    interval = diag.interval
    q = (2.0 * diag.mu - interval.upper - interval.lower) / interval.width()
    v = params.sigma - diag.sigma_star
    if v < 0.0:
        # Guard against roundoff right at the sigma_star floor.
        if v < -1e-9:
            raise NotInDomain(
                f"sigma = {params.sigma} sits below sigma_star = {diag.sigma_star}"
            )
        v = 0.0
    return BoxCoords(
        rho=params.rho,
        b_prime=params.b * (1.0 + abs(params.rho)) / 2.0,
        u=diag.alpha - diag.threshold,
        q=q,
        v=v,
    )
