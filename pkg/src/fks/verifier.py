"""Executable certificates for the a-priori bounds and stability statements.

Each certificate compares a computed quantity with an explicit bound over a
set of samples (trajectory records or static fields).  A sample holds when
``quantity <= bound (1 + tol_rel) + tol_abs``; the certificate records the
signed margin ``bound - quantity`` of the worst sample.  When the parameter
point violates a hypothesis the inequality is still evaluated but the status
is ``outside_hypotheses``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import constants as K
from .constants import BoundEnvelope, DataNorms, ModelParams, envelope_eval
from .torus import (
    Field,
    argmax,
    evaluate,
    frac_laplacian_spectral,
    gagliardo_seminorm,
    inverse,
    norm,
    sobolev_seminorm,
    transform,
)

__all__ = [
    "TOL_REL",
    "TOL_ABS",
    "CLAIMS",
    "Certificate",
    "params_digest",
    "certify_thm1",
    "certify_thm1_limsup",
    "certify_l1_bernoulli",
    "certify_lemma_lp",
    "certify_thm2",
    "certify_cor1",
    "certify_thm2b",
    "certify_twin",
    "certify_sign_v",
    "certify_comparison_v",
    "certify_lemmas_static",
    "certify_trajectory",
    "fit_order",
]

TOL_REL = 1e-6
TOL_ABS = 1e-8

CLAIMS = (
    "THM1_LINF",
    "THM1_LIMSUP",
    "L1_BERNOULLI",
    "LEMMA_LP",
    "THM2_OSC_DECAY",
    "COR1_OSC_DECAY",
    "THM2B_CONVERGENCE",
    "THM3_TWIN",
    "LEM_A1_ENTROPY",
    "LEM_A2_POINCARE",
    "LEM_A3_DICHOTOMY",
    "SIGN_V",
    "COMPARISON_V",
)

STATUSES = ("pass", "fail", "outside_hypotheses", "inconclusive")
FINAL_FRACTION = 0.1
FIT_SKIP = 0.05


def params_digest(pm: ModelParams) -> str:
    blob = json.dumps([pm.d, repr(pm.alpha), repr(pm.chi), repr(pm.r), repr(pm.eps)])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Certificate:
    claim_id: str
    status: str
    worst_margin: Optional[float]
    samples: int
    tolerances: dict
    params_digest: str
    details: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.claim_id not in CLAIMS:
            raise ValueError(f"unknown claim {self.claim_id!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_json(self) -> dict:
        wm = self.worst_margin
        return {
            "claim_id": self.claim_id,
            "status": self.status,
            "worst_margin": float(wm) if wm is not None and math.isfinite(wm) else None,
            "samples": self.samples,
            "tolerances": dict(self.tolerances),
            "params_digest": self.params_digest,
        }


class _Tally:
    """Accumulates ``(bound, quantity)`` samples under the tolerance rule."""

    def __init__(self, tol_rel: float = TOL_REL, tol_abs: float = TOL_ABS):
        self.tol_rel = tol_rel
        self.tol_abs = tol_abs
        self.worst: Optional[float] = None
        self.samples = 0
        self.breaches: list = []

    def add(self, bound: float, quantity: float, label) -> bool:
        self.samples += 1
        margin = bound - quantity
        if self.worst is None or margin < self.worst:
            self.worst = margin
        ok = quantity <= bound + abs(bound) * self.tol_rel + self.tol_abs if math.isfinite(bound) else True
        if not ok:
            self.breaches.append({"at": label, "bound": bound, "quantity": quantity, "margin": margin})
        return ok

    def certificate(self, claim: str, pm_digest: str, hypotheses: bool = True, info=None, inconclusive=False) -> Certificate:
        if not hypotheses:
            status = "outside_hypotheses"
        elif inconclusive:
            status = "inconclusive"
        else:
            status = "fail" if self.breaches else "pass"
        return Certificate(
            claim_id=claim,
            status=status,
            worst_margin=self.worst,
            samples=self.samples,
            tolerances={"tol_rel": self.tol_rel, "tol_abs": self.tol_abs},
            params_digest=pm_digest,
            details=self.breaches,
            info=dict(info or {}),
        )


def _records(traj) -> list:
    return list(getattr(traj, "records", traj))


def _norms(rec, with_osc: bool = False) -> DataNorms:
    return DataNorms(L1=rec.L1, Lp=rec.Lp, Linf=rec.Linf, osc=rec.osc if with_osc else None)


def _restart_index(recs: Sequence, t0: float) -> Optional[int]:
    for i, rec in enumerate(recs):
        if rec.t >= t0 * (1.0 - 1e-12):
            return i
    return None


def _final_window(recs: Sequence) -> list:
    t_end = recs[-1].t
    t_start = recs[0].t
    cut = t_end - FINAL_FRACTION * (t_end - t_start)
    return [r for r in recs if r.t >= cut]


# ---------------------------------------------------------------------------
# trajectory certificates
# ---------------------------------------------------------------------------


def _thm1_hypotheses(pm: ModelParams) -> bool:
    return pm.supercritical and pm.sigma_in_unit


def certify_thm1(traj, params: ModelParams, tol_rel: float = TOL_REL, tol_abs: float = TOL_ABS) -> Certificate:
    """``||u(t)||_inf`` against the datum envelope and, past ``ln2/r``, the restart envelope."""
    recs = _records(traj)
    tally = _Tally(tol_rel, tol_abs)
    info = {"sigma": params.sigma}
    if params.sigma > 0:
        env = BoundEnvelope("Linf_R3", params, _norms(recs[0]))
        for rec in recs:
            tally.add(envelope_eval(env, rec.t), rec.Linf, rec.t)
        i0 = _restart_index(recs, params.t0)
        if i0 is None:
            info["restart"] = "skipped: run ends before ln2/r"
        else:
            anchor = recs[i0]
            env2 = BoundEnvelope("Linf_R3tilde", params, _norms(anchor), t_start=anchor.t)
            info["restart_anchor"] = anchor.t
            for rec in recs[i0:]:
                tally.add(envelope_eval(env2, rec.t), rec.Linf, rec.t)
    else:
        info["envelope"] = "undefined for sigma <= 0"
    return tally.certificate("THM1_LINF", params_digest(params), _thm1_hypotheses(params), info)


def certify_thm1_limsup(traj, params: ModelParams, tol_abs: float = 1e-6) -> Certificate:
    """Largest ``||u||_inf`` over the last tenth of the run against the data-free bound."""
    recs = _final_window(_records(traj))
    tally = _Tally(0.0, tol_abs)
    bound = K.compute_R_inf_tilde(params)
    peak = max(r.Linf for r in recs)
    tally.add(bound, peak, recs[-1].t)
    info = {"R_inf_tilde": bound, "final_window_max": peak}
    return tally.certificate("THM1_LIMSUP", params_digest(params), _thm1_hypotheses(params), info)


def certify_l1_bernoulli(traj, params: ModelParams, tol_rel: float = TOL_REL, tol_abs: float = TOL_ABS) -> Certificate:
    recs = _records(traj)
    tally = _Tally(tol_rel, tol_abs)
    env = BoundEnvelope("L1_bernoulli", params, _norms(recs[0]))
    worst_rel = math.inf
    for rec in recs:
        b = envelope_eval(env, rec.t)
        tally.add(b, rec.L1, rec.t)
        worst_rel = min(worst_rel, (b - rec.L1) / b)
    return tally.certificate(
        "L1_BERNOULLI", params_digest(params), True, {"worst_relative_margin": worst_rel}
    )


def certify_lemma_lp(traj, params: ModelParams, tol_rel: float = TOL_REL, tol_abs: float = TOL_ABS) -> Certificate:
    """``||u||_p``, ``p = chi/(chi - r + eps)``: datum envelope, restart envelope, limsup."""
    recs = _records(traj)
    tally = _Tally(tol_rel, tol_abs)
    env = BoundEnvelope("Lp_Q0", params, _norms(recs[0]))
    for rec in recs:
        tally.add(envelope_eval(env, rec.t), rec.Lp, rec.t)
    info = {"p": params.p}
    i0 = _restart_index(recs, params.t0)
    if i0 is None:
        info["restart"] = "skipped: run ends before ln2/r"
    else:
        anchor = recs[i0]
        env2 = BoundEnvelope("Lp_Q2tilde", params, _norms(anchor), t_start=anchor.t)
        info["restart_anchor"] = anchor.t
        for rec in recs[i0:]:
            tally.add(envelope_eval(env2, rec.t), rec.Lp, rec.t)
        R2t = K.compute_R2_tilde(params)
        peak = max(r.Lp for r in _final_window(recs))
        tally.add(R2t, peak, "final_window")
        info["R2_tilde"] = R2t
        info["final_window_max"] = peak
    return tally.certificate("LEMMA_LP", params_digest(params), True, info)


def fit_order(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


def _decay_slope(recs: Sequence, floor: float) -> Optional[float]:
    t_end = recs[-1].t
    pts = [(r.t, math.log(r.osc)) for r in recs if r.t >= FIT_SKIP * t_end and r.osc > floor]
    if len(pts) < 3:
        return None
    t, y = zip(*pts)
    return fit_order(t, y)


def _trivial_drift(recs: Sequence, d: int) -> bool:
    vol = (2.0 * math.pi) ** d
    return recs[-1].L1 / vol < 0.5


def certify_thm2(
    traj,
    params: ModelParams,
    data_norms: Optional[DataNorms] = None,
    tol_rel: float = TOL_REL,
    tol_abs: float = TOL_ABS,
    slope_factor: float = 0.95,
) -> Certificate:
    """Oscillation decay ``osc(u(t)) <= osc(u0) exp(-gamma t)``.

    When ``gamma`` exists the least-squares slope of ``log osc`` over the
    records past the first 5% of the run must also be at most
    ``-slope_factor * gamma``.
    """
    recs = _records(traj)
    norms0 = data_norms if data_norms is not None else _norms(recs[0], with_osc=True)
    osc0 = norms0.osc if norms0.osc is not None else recs[0].osc
    R3b = K.compute_R3_bar(params, norms0)
    lhs = K.stability_lhs(params, R3b)
    gamma = -lhs if lhs < 0 else None
    hyp = gamma is not None and params.supercritical_nominal and params.sigma_in_unit
    rate = gamma if gamma is not None else 0.0
    tally = _Tally(tol_rel, tol_abs)
    for rec in recs:
        tally.add(osc0 * math.exp(-rate * (rec.t - recs[0].t)), rec.osc, rec.t)
    info = {"ssc_lhs": lhs, "gamma": gamma, "R3_bar": R3b}
    if gamma is not None:
        slope = _decay_slope(recs, floor=1e-13 * max(1.0, recs[-1].Linf))
        info["fitted_slope"] = slope
        if slope is not None:
            # slope <= -slope_factor * gamma, written as a domination
            tally.add(-slope_factor * gamma, slope, "fitted_slope")
    if _trivial_drift(recs, params.d):
        info["warning"] = "mean(u) drifting toward the trivial state"
    return tally.certificate("THM2_OSC_DECAY", params_digest(params), hyp, info)


def certify_cor1(traj, params: ModelParams, tol_rel: float = TOL_REL, tol_abs: float = TOL_ABS) -> Certificate:
    """Oscillation decay with the data-free rate after the entry time ``t*``.

    ``t*`` is the earliest record at or after ``ln2/r`` from which on
    ``||u||_inf`` stays below the data-free limsup bound.
    """
    recs = _records(traj)
    Rinf = K.compute_R_inf_tilde(params)
    gamma = K.gamma_rate_data_free(params)
    i_star = None
    for i in range(len(recs) - 1, -1, -1):
        if recs[i].Linf > Rinf or recs[i].t < params.t0 * (1.0 - 1e-12):
            break
        i_star = i
    tally = _Tally(tol_rel, tol_abs)
    info = {"gamma_data_free": gamma, "R_inf_tilde": Rinf}
    hyp = gamma is not None and params.supercritical_nominal and params.sigma_in_unit
    if i_star is None:
        info["t_star"] = None
        return tally.certificate("COR1_OSC_DECAY", params_digest(params), hyp, info, inconclusive=True)
    anchor = recs[i_star]
    info["t_star"] = anchor.t
    rate = gamma if gamma is not None else 0.0
    for rec in recs[i_star:]:
        tally.add(anchor.osc * math.exp(-rate * (rec.t - anchor.t)), rec.osc, rec.t)
    return tally.certificate("COR1_OSC_DECAY", params_digest(params), hyp, info)


def certify_thm2b(
    traj,
    params: ModelParams,
    target: float = 1e-3,
    tol_rel: float = TOL_REL,
    tol_abs: float = TOL_ABS,
    deadband: float = 1e-6,
) -> Certificate:
    """Convergence to the state 1 in the critical case ``d = alpha = 1``.

    Clauses: (a) mass at most ``2 pi + delta`` from the predicted crossing
    time of the mass envelope on; (b) ``||u - 1||_inf`` below ``target`` at the
    end; (c) whenever ``||u||_inf > 4 + 2 delta/pi`` its centred difference
    quotient is negative up to a dead-band of
    ``deadband * ||u||_inf / record_interval``.  Margins of the three clauses
    are in their own units; the worst one is reported.
    """
    recs = _records(traj)
    chi = params.chi
    hyp = params.d == 1 and params.alpha == 1.0 and params.r < chi < K.thm2b_threshold()
    delta = K.delta_thm2b(chi)
    tally = _Tally(tol_rel, tol_abs)
    info: dict = {"delta": delta}
    inconclusive = False
    if delta <= 0:
        info["mass_clause"] = "delta <= 0: no admissible transient level"
        inconclusive = True
    else:
        level = 2.0 * math.pi + delta
        t_cross = K.bernoulli_crossing_time(recs[0].L1, params.r, 1, level) + recs[0].t
        info["predicted_crossing_time"] = t_cross
        after = [r for r in recs if r.t >= t_cross]
        if not after:
            info["mass_clause"] = "run ends before the predicted crossing time"
            inconclusive = True
        for rec in after:
            tally.add(level, rec.L1, rec.t)
    # (b) sup|u - 1| = max(max u - 1, 1 - min u)
    last = recs[-1]
    dev = max(last.min_u + last.osc - 1.0, 1.0 - last.min_u)
    info["final_deviation"] = dev
    tally.add(target, dev, "final_deviation")
    # (c) centred differences where the maximum is above the threshold
    thr = 4.0 + 2.0 * max(delta, 0.0) / math.pi
    checked = 0
    for i in range(1, len(recs) - 1):
        if recs[i].Linf <= thr:
            continue
        dt2 = recs[i + 1].t - recs[i - 1].t
        slope = (recs[i + 1].Linf - recs[i - 1].Linf) / dt2
        band = deadband * recs[i].Linf / (0.5 * dt2)
        tally.add(band, slope, recs[i].t)
        checked += 1
    info["derivative_checks"] = checked
    return tally.certificate("THM2B_CONVERGENCE", params_digest(params), hyp, info, inconclusive)


def certify_sign_v(traj, params: ModelParams, tol_rel: float = 1e-8) -> Certificate:
    """``max v <= 0`` on every record, tolerance ``tol_rel * ||u||_inf``."""
    tally = _Tally(0.0, 0.0)
    for rec in _records(traj):
        tally.add(tol_rel * rec.Linf, rec.v_max, rec.t)
    hyp = all(rec.min_u >= -1e-10 * rec.Linf for rec in _records(traj))
    cert = tally.certificate("SIGN_V", params_digest(params), True)
    cert.tolerances = {"tol_rel": tol_rel, "tol_abs": 0.0}
    cert.info["nonnegative_run"] = hyp
    return cert


def certify_comparison_v(traj, params: ModelParams, tol_rel: float = 1e-8) -> Certificate:
    """``-max u <= v <= -min u`` on every record within ``tol_rel * ||u||_inf``."""
    tally = _Tally(0.0, 0.0)
    for rec in _records(traj):
        slack = tol_rel * rec.Linf
        umax = rec.min_u + rec.osc
        tally.add(-rec.min_u + slack, rec.v_max, rec.t)
        tally.add(rec.v_min + slack, -umax, rec.t)
    cert = tally.certificate("COMPARISON_V", params_digest(params), True)
    cert.tolerances = {"tol_rel": tol_rel, "tol_abs": 0.0}
    return cert


def certify_trajectory(traj, params: ModelParams) -> list[Certificate]:
    """All trajectory certificates applicable to a single run."""
    certs = [
        certify_l1_bernoulli(traj, params),
        certify_lemma_lp(traj, params),
        certify_thm1(traj, params),
        certify_thm1_limsup(traj, params),
        certify_thm2(traj, params),
        certify_cor1(traj, params),
        certify_sign_v(traj, params),
        certify_comparison_v(traj, params),
    ]
    if params.d == 1 and params.alpha == 1.0:
        certs.append(certify_thm2b(traj, params))
    return certs


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------


def certify_twin(
    distances: Sequence[float],
    dts: Sequence[float],
    params: ModelParams,
    grid_distance: Optional[float] = None,
    min_order: float = 0.9,
    spectral_floor: float = 1e-8,
) -> Certificate:
    """Convergence of twin runs: fitted order in ``dt`` and spectral smallness in ``n``.

    ``distances[i]`` is the distance between runs with steps ``dts[i]`` and
    ``dts[i] / 2``.  All-zero distances (identical runs) pass trivially.
    """
    if len(distances) != len(dts) or len(dts) < 3:
        raise ValueError("need at least three refinement levels")
    tally = _Tally(0.0, 0.0)
    info: dict = {}
    dist = np.asarray(distances, float)
    if np.all(dist == 0.0):
        info["order"] = None
        tally.add(0.0, 0.0, "identical")
    else:
        if np.any(dist <= 0.0):
            raise ValueError("distances must be all zero or all positive")
        order = fit_order(np.log(dts), np.log(dist))
        info["order"] = order
        tally.add(order, min_order, "order")
    if grid_distance is not None:
        info["grid_distance"] = grid_distance
        tally.add(spectral_floor, grid_distance, "grid")
    return tally.certificate("THM3_TWIN", params_digest(params), params.alpha > 1.0, info)


# ---------------------------------------------------------------------------
# static lemma certificates
# ---------------------------------------------------------------------------


def _lambda_alpha_values(f: Field, alpha: float) -> np.ndarray:
    return inverse(frac_laplacian_spectral(transform(f), alpha)).values


def _integral(values: np.ndarray, f: Field) -> float:
    return float(np.sum(values) * f.grid.cell_volume)


def lemma_terms(f: Field, alpha: float, s: float, delta: float, p: float = 1.0) -> dict:
    """Both sides of every appendix inequality for one nonnegative field."""
    d = f.grid.d
    u = f.values
    if np.min(u) <= 0:
        raise ValueError("lemma checks need a strictly positive field")
    lam_u = _lambda_alpha_values(f, alpha)
    dissip = _integral(lam_u * u**s, f)
    out = {}
    # A1a
    w = Field(f.grid, u ** (0.5 * (s + 1.0)))
    out["A1a"] = (dissip, 4.0 * s / (1.0 + s) ** 2 * sobolev_seminorm(w, alpha / 2.0) ** 2)
    # A1b
    sig = alpha / (2.0 + 2.0 * s) - delta
    W = gagliardo_seminorm(f, sig, 1.0 + s)
    S = K.entropy_S(alpha, s, delta, d)
    out["A1b"] = (S * norm(f, 1.0 + s) ** (1.0 + s) * dissip, W**2)
    # A1c
    W0 = gagliardo_seminorm(f, alpha / 2.0 - delta, 1.0)
    S0 = K.entropy_S(alpha, 0.0, delta, d)
    out["A1c"] = (S0 * norm(f, 1.0) * _integral(lam_u * np.log(u), f), W0**2)
    # A2, sharp constant at d = alpha = 1
    P = K.poincare_constant(d, alpha)
    vol = (2.0 * math.pi) ** d
    rhs = dissip + P / vol * _integral(u, f) * _integral(u**s, f)
    out["A2"] = (rhs, P * norm(f, 1.0 + s) ** (1.0 + s))
    # A3 at the maximiser of the interpolant
    M1, M2 = K.dichotomy_constants(d, p, alpha)
    xs, hmax = argmax(f)
    lam_at = evaluate(frac_laplacian_spectral(transform(f), alpha), xs)
    hp = norm(f, p)
    e = alpha * p / d
    out["A3_i"] = (M1 * hp, hmax)
    out["A3_ii"] = (lam_at, M2 * hmax ** (1.0 + e) / hp**e)
    return out


def certify_lemmas_static(
    fields: Iterable[Field],
    params: ModelParams | None,
    s: float,
    delta: float,
    alpha: Optional[float] = None,
    p: float = 1.0,
    tol_rel: float = TOL_REL,
    tol_abs: float = TOL_ABS,
) -> list[Certificate]:
    """Entropy, Poincare and dichotomy inequalities on a sample of positive fields.

    Returns certificates ``LEM_A1_ENTROPY`` (three parts, with per-part
    tallies in ``info``), ``LEM_A2_POINCARE`` and ``LEM_A3_DICHOTOMY``.  The
    dichotomy margin of a field is the larger of its two branch margins; a
    field failing both branches counts as an exhaustiveness violation.
    ``alpha`` defaults to ``params.alpha``.
    """
    if alpha is None:
        if params is None:
            raise ValueError("need params or alpha")
        alpha = params.alpha
    if not (0.0 < s <= 1.0):
        raise ValueError("s must lie in (0, 1]")
    if not (0.0 < delta < alpha / (2.0 + 2.0 * s)):
        raise ValueError("delta must lie in (0, alpha/(2+2s))")
    digest = params_digest(params) if params is not None else "static"
    parts = {k: _Tally(tol_rel, tol_abs) for k in ("A1a", "A1b", "A1c")}
    a1 = _Tally(tol_rel, tol_abs)
    a2 = _Tally(tol_rel, tol_abs)
    a3 = _Tally(tol_rel, tol_abs)
    violations = 0
    branches = {"i": 0, "ii": 0}
    for idx, f in enumerate(fields):
        terms = lemma_terms(f, alpha, s, delta, p)
        for key in parts:
            bound, q = terms[key]
            parts[key].add(bound, q, idx)
            a1.add(bound, q, (key, idx))
        a2.add(*terms["A2"], idx)
        (b1, q1), (b2, q2) = terms["A3_i"], terms["A3_ii"]
        ok1 = q1 <= b1 + abs(b1) * tol_rel + tol_abs
        ok2 = q2 <= b2 + abs(b2) * tol_rel + tol_abs
        branches["i"] += ok1
        branches["ii"] += ok2
        if not (ok1 or ok2):
            violations += 1
        # record the better branch so that the tally reflects the disjunction
        if (b1 - q1) / max(abs(b1), 1e-300) >= (b2 - q2) / max(abs(b2), 1e-300):
            a3.add(b1, q1, (idx, "i"))
        else:
            a3.add(b2, q2, (idx, "ii"))
    info1 = {k: {"worst_margin": t.worst, "breaches": len(t.breaches)} for k, t in parts.items()}
    return [
        a1.certificate("LEM_A1_ENTROPY", digest, True, info1),
        a2.certificate("LEM_A2_POINCARE", digest, True),
        a3.certificate(
            "LEM_A3_DICHOTOMY", digest, True, {"violations": violations, "branch_counts": branches}
        ),
    ]
