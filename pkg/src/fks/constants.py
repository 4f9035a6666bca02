"""Closed-form constants, exponents and time-dependent bound envelopes.

Everything here is a pure function of the model parameters and (for the
data-dependent quantities) a handful of norms of the initial datum.  The
singular-integral normalisation and the entropy constant are obtained by
deterministic adaptive quadrature (QUADPACK via :mod:`scipy.integrate`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Optional

from scipy import integrate

QUAD_TOL = 1e-10

THM2B_THRESHOLD = 1.0 / (8.0 * math.pi**2)


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature misses its absolute tolerance."""


class ParameterError(ValueError):
    """Raised for parameters outside the admissible domain."""


def _quad(f, a, b, **kw):
    with warnings.catch_warnings():
        # QAWF flags slowly decaying cycles; the returned error estimate is what we check
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=500, **kw)
    if not math.isfinite(val) or err > QUAD_TOL * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] reached error {err:.3e}")
    return val


def _check_d_alpha(d: int, alpha: float, upper: float = 2.0) -> None:
    if d not in (1, 2):
        raise ParameterError(f"dimension must be 1 or 2, got {d}")
    if not (0.0 < alpha < upper):
        raise ParameterError(f"alpha must lie in (0, {upper:g}), got {alpha}")


@lru_cache(maxsize=None)
def radial_sine_integral(alpha: float) -> float:
    """Return ``int_0^inf 4 sin^2(t/2) t^(-1-alpha) dt``.

    The unit cell ``[0, 1]`` carries the algebraic weight ``t^(1-alpha)``
    with the smooth factor ``4 sin^2(t/2)/t^2``; on ``[1, inf)`` the
    integrand is split as ``2 t^(-1-alpha) - 2 cos(t) t^(-1-alpha)``, the
    first piece integrated exactly and the second by the Fourier-weighted
    semi-infinite rule.
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")

    def smooth(t):
        return (2.0 * math.sin(0.5 * t)) ** 2 / (t * t) if t > 0 else 1.0

    near = _quad(smooth, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0))
    osc = _quad(lambda t: t ** (-1.0 - alpha), 1.0, math.inf, weight="cos", wvar=1.0)
    return near + 2.0 / alpha - 2.0 * osc


@lru_cache(maxsize=None)
def compute_C(d: int, alpha: float) -> float:
    """Normalisation of the singular-integral form of ``Lambda^alpha``.

    ``C = 2 / int_{R^d} 4 sin^2(x_1/2) / |x|^(d+alpha) dx``.  In ``d=2`` the
    integral is taken in polar coordinates: the radial part reduces to
    :func:`radial_sine_integral` times ``|cos(theta)|^alpha`` and the angular
    factor is integrated numerically.
    """
    _check_d_alpha(d, alpha)
    radial = radial_sine_integral(alpha)
    if d == 1:
        total = 2.0 * radial
    else:
        angular = 4.0 * _quad(lambda th: math.cos(th) ** alpha, 0.0, 0.5 * math.pi)
        total = radial * angular
    return 2.0 / total


def compute_P(d: int, alpha: float) -> float:
    """General Poincare-type constant ``2 C / ((2 pi)^alpha d^((d+alpha)/2))``."""
    return 2.0 * compute_C(d, alpha) / ((2.0 * math.pi) ** alpha * d ** (0.5 * (d + alpha)))


def sharp_P11() -> float:
    return 1.0


def _gamma_moment(d: int) -> float:
    # int_0^inf z^(d/2) e^(-z) dz
    return math.gamma(0.5 * d + 1.0)


def compute_M1(d: int, p: float, alpha: float) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    return (math.pi ** (0.5 * d) / 2.0 ** (1.0 + p) * _gamma_moment(d)) ** (1.0 / p)


def compute_M2(d: int, p: float, alpha: float) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    ratio = math.pi ** (0.5 * d) / _gamma_moment(d)
    return compute_C(d, alpha) * ratio ** (1.0 + alpha / d) / (4.0 * 2.0 ** ((p + 1.0) * alpha / d))


def sharp_M_11() -> tuple[float, float]:
    """Dichotomy constants valid for ``d = alpha = p = 1``."""
    return 2.0 / math.pi, 1.0 / (4.0 * math.pi)


def dichotomy_constants(d: int, p: float, alpha: float) -> tuple[float, float]:
    """Constants used by certificates: sharp ones where they apply."""
    if d == 1 and alpha == 1.0 and p == 1.0:
        return sharp_M_11()
    return compute_M1(d, p, alpha), compute_M2(d, p, alpha)


def poincare_constant(d: int, alpha: float) -> float:
    return sharp_P11() if (d == 1 and alpha == 1.0) else compute_P(d, alpha)


def _distance_integral(d: int, a: float) -> float:
    """``int_{[-pi,pi]^d} |y|^(a-d) dy`` (the supremum over x sits at x = 0)."""
    if d == 1:
        return 2.0 * _quad(lambda y: 1.0, 0.0, math.pi, weight="alg", wvar=(a - 1.0, 0.0))
    # radial part done exactly on each ray, angle by quadrature (8 symmetric sectors)
    return 8.0 * _quad(lambda th: (math.pi / math.cos(th)) ** a / a, 0.0, 0.25 * math.pi)


def entropy_S(alpha: float, s: float, delta: float, d: int) -> float:
    """Constant of the fractional entropy/Sobolev inequality.

    For ``0 < s <= 1`` the admissible range is ``0 < delta < alpha/(2+2s)``;
    ``s = 0`` selects the logarithmic variant with ``0 < delta < alpha/2``.
    """
    _check_d_alpha(d, alpha)
    if s < 0 or s > 1:
        raise ParameterError(f"s must lie in [0, 1], got {s}")
    dmax = alpha / (2.0 + 2.0 * s)
    if not (0.0 < delta < dmax):
        raise ParameterError(f"delta must lie in (0, {dmax:g}), got {delta}")
    C = compute_C(d, alpha)
    if s == 0:
        return 2.0 / C * _distance_integral(d, 2.0 * delta)
    return 2.0 ** (2.0 * s + 1.0) / (C * s) * _distance_integral(d, 2.0 * (1.0 + s) * delta)


# ---------------------------------------------------------------------------
# model parameters and derived constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(d, alpha, chi, r, eps)`` of the forced Keller-Segel model."""

    d: int
    alpha: float
    chi: float
    r: float
    eps: float

    def __post_init__(self) -> None:
        _check_d_alpha(self.d, self.alpha)
        if not (self.r > 0 and self.chi > 0):
            raise ParameterError("chi and r must be positive")
        if not self.chi > self.r:
            raise ParameterError(f"the model assumes chi > r, got chi={self.chi}, r={self.r}")
        if not (0.0 < self.eps < self.r):
            raise ParameterError(f"eps must lie in (0, r), got {self.eps}")

    @classmethod
    def with_default_eps(cls, d: int, alpha: float, chi: float, r: float) -> "ModelParams":
        """Pick eps at the midpoint of ``{eps in (0, r): alpha > d(1 - (r-eps)/chi)}``."""
        _check_d_alpha(d, alpha)
        upper = min(r, r - chi * (1.0 - alpha / d))
        if upper <= 0:
            raise ParameterError(
                f"no admissible eps: alpha={alpha} <= d(1 - r/chi) = {d * (1 - r / chi):g}"
            )
        return cls(d, alpha, chi, r, 0.5 * upper)

    @property
    def s(self) -> float:
        return (self.r - self.eps) / (self.chi - self.r + self.eps)

    @property
    def p(self) -> float:
        return self.chi / (self.chi - self.r + self.eps)

    @property
    def sigma(self) -> float:
        return self.alpha / self.d * self.p - 1.0

    @property
    def lp_exponent(self) -> float:
        # ||u||_p = Y^(1 - (r-eps)/chi) with Y = ||u||_p^p
        return 1.0 - (self.r - self.eps) / self.chi

    @property
    def supercritical(self) -> bool:
        """``alpha > d (1 - (r - eps)/chi)``, the hypothesis with slack eps."""
        return self.alpha > self.d * (1.0 - (self.r - self.eps) / self.chi)

    @property
    def supercritical_nominal(self) -> bool:
        return self.alpha > self.d * (1.0 - self.r / self.chi)

    @property
    def sigma_in_unit(self) -> bool:
        return 0.0 < self.sigma <= 1.0

    @property
    def t0(self) -> float:
        return math.log(2.0) / self.r

    def key(self) -> tuple:
        return (self.d, self.alpha, self.chi, self.r, self.eps)


@dataclass(frozen=True)
class DataNorms:
    """Norms of a datum (initial or restart) consumed by the envelopes."""

    L1: float
    Lp: float
    Linf: float
    osc: Optional[float] = None


def compute_R1(L1: float, d: int) -> float:
    return max(L1, (2.0 * math.pi) ** d)


def _absorbed_source(pm: ModelParams) -> float:
    # r (r/eps * chi/(2chi - r + eps))^(chi/(chi - r + eps))
    chi, r, eps = pm.chi, pm.r, pm.eps
    return r * (r / eps * chi / (2.0 * chi - r + eps)) ** pm.p


def compute_R0(pm: ModelParams, L1: float) -> float:
    vol = (2.0 * math.pi) ** pm.d
    P = poincare_constant(pm.d, pm.alpha)
    base = _absorbed_source(pm) / P + max(L1**2 / vol, vol)
    return base**pm.lp_exponent


def compute_R2(pm: ModelParams, L1: float) -> float:
    vol = (2.0 * math.pi) ** pm.d
    P = poincare_constant(pm.d, pm.alpha)
    R1 = compute_R1(L1, pm.d)
    return (_absorbed_source(pm) / P + R1**2 / vol + R1) ** pm.lp_exponent


def compute_R2_tilde(pm: ModelParams) -> float:
    vol = (2.0 * math.pi) ** pm.d
    P = poincare_constant(pm.d, pm.alpha)
    return (_absorbed_source(pm) / P + 3.0 * vol) ** pm.lp_exponent


def odi_coefficients(pm: ModelParams, L1: float) -> tuple[float, float]:
    """Coefficients ``(A, B)`` of ``Y' + A Y <= B`` for ``Y = ||u||_p^p``."""
    vol = (2.0 * math.pi) ** pm.d
    P = poincare_constant(pm.d, pm.alpha)
    R1 = compute_R1(L1, pm.d)
    A = pm.p * P
    B = pm.p * (_absorbed_source(pm) + P / vol * R1 * (R1 + vol))
    return A, B


def linf_factor(pm: ModelParams) -> float:
    """``M1 + (4 chi / M2)^(1/2 + 1/sigma) + 1`` with the module's dichotomy constants."""
    sigma = pm.sigma
    if sigma <= 0:
        return math.inf
    M1, M2 = dichotomy_constants(pm.d, pm.p, pm.alpha)
    return M1 + (4.0 * pm.chi / M2) ** (0.5 + 1.0 / sigma) + 1.0


def _lp_power(q: float, pm: ModelParams) -> float:
    sigma = pm.sigma
    if sigma <= 0:
        return math.inf
    return q ** (3.0 / sigma)


def compute_R_inf_tilde(pm: ModelParams) -> float:
    return 2.0 * _lp_power(compute_R2_tilde(pm), pm) * linf_factor(pm)


def compute_R3_bar(pm: ModelParams, norms: DataNorms) -> float:
    """Time-independent majorant of the first L^inf envelope.

    The Lp interpolant is bounded by ``max(||u0||_p, R0)`` uniformly in time.
    """
    q = max(norms.Lp, compute_R0(pm, norms.L1))
    return 2.0 * norms.Linf + 2.0 * _lp_power(q, pm) * linf_factor(pm)


def dissipation_term(d: int, alpha: float) -> float:
    return (2.0 * math.pi) ** d * compute_C(d, alpha) / (2.0 * math.pi * math.sqrt(d)) ** (d + alpha)


def stability_lhs(pm: ModelParams, R3: float) -> float:
    """Left side of the closeness condition; negative means exponential decay."""
    chi, r = pm.chi, pm.r
    return 2.0 * chi - r + 2.0 * (chi - r) * (R3 - 1.0) - dissipation_term(pm.d, pm.alpha)


def gamma_rate(pm: ModelParams, norms: DataNorms) -> Optional[float]:
    """Decay rate of the oscillation, or ``None`` when the condition fails."""
    lhs = stability_lhs(pm, compute_R3_bar(pm, norms))
    return -lhs if lhs < 0 else None


def gamma_rate_data_free(pm: ModelParams) -> Optional[float]:
    """Same condition with the data-independent limsup bound in place of R3-bar."""
    lhs = stability_lhs(pm, compute_R_inf_tilde(pm))
    return -lhs if lhs < 0 else None


def thm2b_threshold() -> float:
    return THM2B_THRESHOLD


def delta_thm2b(chi: float) -> float:
    return min(1.0, 1.0 / (4.0 * math.pi * chi) - 2.0 * math.pi)


def bernoulli_crossing_time(L1: float, r: float, d: int, level: float) -> float:
    """First time the L^1 envelope drops to ``level`` (0 if it starts below)."""
    vol = (2.0 * math.pi) ** d
    if L1 <= level:
        return 0.0
    if level <= vol:
        return math.inf
    # m/(e + (1-e) m/vol) = level  with e = exp(-r t)
    e = L1 * (1.0 / level - 1.0 / vol) / (1.0 - L1 / vol)
    return -math.log(e) / r


@dataclass(frozen=True)
class PaperConstants:
    """All constants for one parameter point (data-dependent ones optional)."""

    params: ModelParams
    C_d_alpha: float
    P_d_alpha: float
    P_sharp: Optional[float]
    M1: float
    M2: float
    M1_sharp: Optional[float]
    M2_sharp: Optional[float]
    sigma: float
    s: float
    p: float
    R2_tilde: float
    R_inf_tilde: float
    S_entropy: Optional[float]
    t0: float
    thm2b_threshold: float
    delta_thm2b: Optional[float]
    gamma_data_free: Optional[float]
    R0: Optional[float] = None
    R1: Optional[float] = None
    R2: Optional[float] = None
    R3_bar: Optional[float] = None
    gamma: Optional[float] = None
    ssc_lhs: Optional[float] = None
    notes: tuple = field(default=())

    def K(self, q: float) -> float:
        """``M2 / q^((alpha/d) p)`` for an Lp level ``q``."""
        pm = self.params
        return self.M2 / q ** (pm.alpha / pm.d * pm.p)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("params")
        out["notes"] = list(self.notes)
        return out


def compute_constants(
    pm: ModelParams,
    norms: Optional[DataNorms] = None,
    s_entropy: Optional[float] = None,
    delta_entropy: Optional[float] = None,
) -> PaperConstants:
    d, alpha, p = pm.d, pm.alpha, pm.p
    sharp = d == 1 and alpha == 1.0
    notes = []
    if not pm.supercritical:
        notes.append("alpha <= d(1-(r-eps)/chi): outside proof hypotheses")
    if pm.sigma > 1:
        notes.append("sigma > 1: outside proof hypotheses")
    M1s, M2s = sharp_M_11() if sharp else (None, None)

    s_e = min(pm.s, 1.0) if s_entropy is None else s_entropy
    d_e = alpha / (4.0 + 4.0 * s_e) if delta_entropy is None else delta_entropy
    try:
        S = entropy_S(alpha, s_e, d_e, d)
    except ParameterError:
        S = None

    chi_ok = pm.chi < THM2B_THRESHOLD
    kw = {}
    if norms is not None:
        R3b = compute_R3_bar(pm, norms)
        lhs = stability_lhs(pm, R3b)
        kw = dict(
            R0=compute_R0(pm, norms.L1),
            R1=compute_R1(norms.L1, d),
            R2=compute_R2(pm, norms.L1),
            R3_bar=R3b,
            ssc_lhs=lhs,
            gamma=-lhs if lhs < 0 else None,
        )
    return PaperConstants(
        params=pm,
        C_d_alpha=compute_C(d, alpha),
        P_d_alpha=compute_P(d, alpha),
        P_sharp=sharp_P11() if sharp else None,
        M1=compute_M1(d, p, alpha),
        M2=compute_M2(d, p, alpha),
        M1_sharp=M1s,
        M2_sharp=M2s,
        sigma=pm.sigma,
        s=pm.s,
        p=p,
        R2_tilde=compute_R2_tilde(pm),
        R_inf_tilde=compute_R_inf_tilde(pm),
        S_entropy=S,
        t0=pm.t0,
        thm2b_threshold=THM2B_THRESHOLD,
        delta_thm2b=delta_thm2b(pm.chi) if (sharp and chi_ok) else None,
        gamma_data_free=gamma_rate_data_free(pm),
        notes=tuple(notes),
        **kw,
    )


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

ENVELOPE_KINDS = (
    "L1_bernoulli",
    "Lp_Q0",
    "Lp_Q2",
    "Lp_Q2tilde",
    "Linf_R3",
    "Linf_R3tilde",
    "Linf_Rinf",
    "osc_decay",
)

_RESTART_KINDS = {"Lp_Q2tilde", "Linf_R3tilde", "osc_decay"}


@dataclass(frozen=True)
class BoundEnvelope:
    """A time-dependent bound anchored at ``t_start`` with datum norms ``norms``.

    Restart envelopes (``Lp_Q2tilde``, ``Linf_R3tilde``) are anchored at a
    time ``t_start >= ln(2)/r`` and measure elapsed time from there;
    ``osc_decay`` needs ``rate``.
    """

    kind: str
    params: ModelParams
    norms: Optional[DataNorms] = None
    t_start: float = 0.0
    rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind in ("Lp_Q2tilde", "Linf_R3tilde") and self.t_start < self.params.t0 * (1 - 1e-12):
            raise ValueError(f"{self.kind} must be anchored at t >= ln2/r = {self.params.t0:g}")
        if self.kind != "Linf_Rinf" and self.norms is None:
            raise ValueError(f"{self.kind} needs datum norms")


def _interp(q0: float, target: float, P: float, tau: float) -> float:
    e = math.exp(-P * tau)
    return q0 * e + (1.0 - e) * target


def envelope_eval(env: BoundEnvelope, t: float) -> float:
    pm = env.params
    kind = env.kind
    if t < env.t_start - 1e-12 * max(1.0, abs(env.t_start)):
        raise ValueError(f"{kind} anchored at {env.t_start:g} evaluated at t={t:g}")
    tau = max(t - env.t_start, 0.0)
    P = poincare_constant(pm.d, pm.alpha)
    nm = env.norms
    if kind == "L1_bernoulli":
        e = math.exp(-pm.r * tau)
        return nm.L1 / (e + (2.0 * math.pi) ** (-pm.d) * (1.0 - e) * nm.L1)
    if kind == "Lp_Q0":
        return _interp(nm.Lp, compute_R0(pm, nm.L1), P, tau)
    if kind == "Lp_Q2":
        return _interp(nm.Lp, compute_R2(pm, nm.L1), P, tau)
    if kind == "Lp_Q2tilde":
        return _interp(nm.Lp, compute_R2_tilde(pm), P, tau)
    if kind == "Linf_R3":
        q = _interp(nm.Lp, compute_R0(pm, nm.L1), P, tau)
        return 2.0 * math.exp(-tau) * nm.Linf + 2.0 * _lp_power(q, pm) * linf_factor(pm)
    if kind == "Linf_R3tilde":
        q = _interp(nm.Lp, compute_R2_tilde(pm), P, tau)
        return 2.0 * math.exp(-tau) * nm.Linf + 2.0 * _lp_power(q, pm) * linf_factor(pm)
    if kind == "Linf_Rinf":
        return compute_R_inf_tilde(pm)
    # osc_decay
    if env.rate is None or nm.osc is None:
        raise ValueError("osc_decay needs a rate and the anchor oscillation")
    return nm.osc * math.exp(-env.rate * tau)
