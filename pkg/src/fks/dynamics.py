"""Pseudo-spectral IMEX integration of the forced fractional Keller-Segel system.

The evolution is ``u_t = -Lambda^alpha u + chi div(u grad v) + r u (1 - u)``
with ``Delta v - v = u``.  The fractional diffusion is diagonal in Fourier
space and handled implicitly; the chemotactic flux and the logistic term are
explicit.  Internally the state is kept as raw ``rfftn`` coefficients, which
only differ from the mean-normalised convention of :mod:`fks.torus` by a
diagonal factor, so every multiplier carries over unchanged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constants import BoundEnvelope, DataNorms, ModelParams, envelope_eval
from .torus import Field, TorusGrid, elliptic_solve, extrema, norm, sobolev_seminorm

__all__ = [
    "SolverConfig",
    "TrajectoryRecord",
    "Trajectory",
    "SolverError",
    "default_dt",
    "step",
    "run",
    "twin_run",
    "data_norms",
]

log = logging.getLogger(__name__)

SCHEMES = ("IMEX1", "IMEX2")
ABORT_FACTOR = 1e3


class SolverError(RuntimeError):
    """Raised when a run aborts; ``trajectory`` holds the records produced so far."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None, step_index: int | None = None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step_index = step_index


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step solver settings.

    ``dt=None`` selects :func:`default_dt` from the initial datum.  The step is
    then shrunk slightly so that an integer number of steps reaches ``t_end``.
    ``neg_tol`` is relative to ``||u||_inf``.  With ``adaptive`` the step is
    halved whenever ``dt`` times a Lipschitz estimate of the explicit term
    exceeds ``lipschitz_cap``; it is never increased.
    """

    grid: TorusGrid
    params: ModelParams
    t_end: float
    dt: Optional[float] = None
    scheme: str = "IMEX2"
    dealias: bool = True
    record_every: int = 1
    neg_tol: float = 1e-10
    adaptive: bool = False
    lipschitz_cap: float = 0.5

    def __post_init__(self) -> None:
        if self.grid.d != self.params.d:
            raise ValueError("grid and params disagree on the dimension")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.neg_tol < 0:
            raise ValueError("neg_tol must be nonnegative")


@dataclass
class TrajectoryRecord:
    t: float
    L1: float
    Lp: float
    L2: float
    Linf: float
    Halpha2: float
    min_u: float
    osc: float
    v_min: float
    v_max: float
    envelopes: dict
    flags: tuple = ()
    u: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def mass(self) -> float:
        return self.L1


@dataclass
class Trajectory:
    config: SolverConfig
    dt: float
    records: list
    u_final: Optional[Field] = None
    steps: int = 0
    status: str = "ok"
    message: str = ""

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


# ---------------------------------------------------------------------------
# spectral operators on raw rfft coefficients
# ---------------------------------------------------------------------------


class _Operators:
    def __init__(self, grid: TorusGrid, alpha: float, dealias: bool):
        n, d = grid.n, grid.d
        kf = np.fft.fftfreq(n, 1.0 / n)
        kr = np.fft.rfftfreq(n, 1.0 / n)
        if d == 1:
            ks = (kr,)
        else:
            ks = tuple(np.meshgrid(kf, kr, indexing="ij"))
        k2 = sum(k * k for k in ks)
        self.shape = grid.shape
        self.axes = tuple(range(d))
        self.lam = np.sqrt(k2) ** alpha
        self.inv_ell = 1.0 / (-k2 - 1.0)
        odd = []
        for k in ks:
            kk = k.astype(float).copy()
            kk[np.abs(kk) == n // 2] = 0.0
            odd.append(1j * kk)
        self.ik = tuple(odd)
        if dealias:
            keep = np.ones(ks[0].shape, dtype=bool)
            for k in ks:
                keep &= np.abs(k) <= n / 3.0
            self.mask = keep.astype(float)
        else:
            self.mask = None

    def fwd(self, x: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(x, axes=self.axes)

    def inv(self, X: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(X, s=self.shape, axes=self.axes)

    def truncate(self, X: np.ndarray) -> np.ndarray:
        return X if self.mask is None else X * self.mask


def _nonlinear(U: np.ndarray, ops: _Operators, chi: float, r: float) -> np.ndarray:
    """Explicit term ``chi div(u grad v) + r u (1 - u)`` in coefficient space."""
    u = ops.inv(U)
    V = U * ops.inv_ell
    div = 0.0
    for ik in ops.ik:
        flux = u * ops.inv(ik * V)
        div = div + ik * ops.fwd(flux)
    N = chi * div + r * (U - ops.fwd(u * u))
    return ops.truncate(N)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def default_dt(u0: Field, params: ModelParams) -> float:
    """``0.5 min(h / (chi max|grad v| + 1), 0.1 / r)`` evaluated on the datum."""
    g = u0.grid
    ops = _Operators(g, params.alpha, dealias=False)
    V = ops.fwd(u0.values) * ops.inv_ell
    grad = np.sqrt(sum(ops.inv(ik * V) ** 2 for ik in ops.ik))
    gmax = float(np.max(grad)) if np.ndim(grad) else 0.0
    return 0.5 * min(g.h / (params.chi * gmax + 1.0), 0.1 / params.r)


def _imex1(U, N, dt, ops):
    return (U + dt * N) / (1.0 + dt * ops.lam)


def _heun(U, N, dt, ops, chi, r):
    # Crank-Nicolson diffusion with a trapezoidal explicit term: second order
    pred = _imex1(U, N, dt, ops)
    Np = _nonlinear(pred, ops, chi, r)
    half = 0.5 * dt * ops.lam
    return ((1.0 - half) * U + 0.5 * dt * (N + Np)) / (1.0 + half)


def _sbdf2(U, Uprev, N, Nprev, dt, ops):
    return (4.0 * U - Uprev + 2.0 * dt * (2.0 * N - Nprev)) / (3.0 + 2.0 * dt * ops.lam)


def step(u: Field, cfg: SolverConfig, dt: Optional[float] = None) -> Field:
    """Advance ``u`` by one step of length ``dt`` (default ``cfg.dt``).

    A single step has no history, so ``IMEX1`` takes a first-order step and
    ``IMEX2`` takes its second-order start-up step.
    """
    dt = cfg.dt if dt is None else dt
    if dt is None:
        dt = default_dt(u, cfg.params)
    _check_state(u.values, cfg.neg_tol, 0)
    ops = _Operators(cfg.grid, cfg.params.alpha, cfg.dealias)
    U = ops.truncate(ops.fwd(u.values))
    N = _nonlinear(U, ops, cfg.params.chi, cfg.params.r)
    if cfg.scheme == "IMEX1":
        U1 = _imex1(U, N, dt, ops)
    else:
        U1 = _heun(U, N, dt, ops, cfg.params.chi, cfg.params.r)
    out = ops.inv(U1)
    if not np.all(np.isfinite(out)):
        raise SolverError("non-finite values after step", step_index=1)
    return Field(cfg.grid, out)


def _check_state(values: np.ndarray, neg_tol: float, k: int) -> bool:
    """Raise on non-finite or strongly negative states; return True on a mild breach."""
    if not np.all(np.isfinite(values)):
        raise SolverError(f"non-finite values at step {k}", step_index=k)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    lo = float(np.min(values))
    if lo < -ABORT_FACTOR * neg_tol * scale:
        raise SolverError(f"negativity {lo:.3e} beyond abort level at step {k}", step_index=k)
    return lo < -neg_tol * scale


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


def data_norms(u: Field, params: ModelParams) -> DataNorms:
    lo, hi = extrema(u)
    return DataNorms(
        L1=norm(u, 1),
        Lp=norm(u, params.p),
        Linf=max(abs(lo), abs(hi)),
        osc=hi - lo,
    )


def _envelopes(params: ModelParams, norms0: DataNorms) -> dict:
    out = {
        "L1": BoundEnvelope("L1_bernoulli", params, norms0),
        "Lp": BoundEnvelope("Lp_Q0", params, norms0),
    }
    if params.sigma > 0:
        out["Linf"] = BoundEnvelope("Linf_R3", params, norms0)
    return out


def _record(u: Field, t: float, params: ModelParams, envs: dict, breach: bool, keep: bool) -> TrajectoryRecord:
    lo, hi = extrema(u)
    v = elliptic_solve(u)
    vlo, vhi = extrema(v)
    linf = max(abs(lo), abs(hi))
    rec = TrajectoryRecord(
        t=t,
        L1=norm(u, 1),
        Lp=norm(u, params.p),
        L2=norm(u, 2),
        Linf=linf,
        Halpha2=sobolev_seminorm(u, params.alpha / 2.0),
        min_u=lo,
        osc=hi - lo,
        v_min=vlo,
        v_max=vhi,
        envelopes={},
        u=u.values.copy() if keep else None,
    )
    flags = []
    if breach:
        flags.append("negativity_breach")
    for name, env in envs.items():
        val = envelope_eval(env, t)
        rec.envelopes[name] = val
        quantity = getattr(rec, name)
        if quantity > val * (1.0 + 1e-6) + 1e-8:
            flags.append(f"envelope_breach:{name}")
    rec.flags = tuple(flags)
    return rec


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _step_count(t_span: float, dt: float) -> int:
    return max(1, int(math.ceil(t_span / dt - 1e-9)))


def run(
    u0: Field,
    cfg: SolverConfig,
    keep_fields: bool = False,
    on_record: Optional[Callable[[TrajectoryRecord], None]] = None,
) -> Trajectory:
    """Integrate from ``t = 0`` to ``cfg.t_end``.

    Records are taken at step 0, every ``cfg.record_every`` steps and at the
    final step.  Envelopes are anchored at the datum.  On failure a
    :class:`SolverError` is raised whose ``trajectory`` keeps all records
    produced before the failure.
    """
    if u0.grid != cfg.grid:
        raise ValueError("initial datum lives on a different grid")
    pm = cfg.params
    dt0 = cfg.dt if cfg.dt is not None else default_dt(u0, pm)
    nsteps = _step_count(cfg.t_end, dt0)
    dt = cfg.t_end / nsteps
    traj = Trajectory(config=cfg, dt=dt, records=[])

    breach = _check_state(u0.values, cfg.neg_tol, 0)
    norms0 = data_norms(u0, pm)
    envs = _envelopes(pm, norms0)

    def emit(values: np.ndarray, t: float, flagged: bool) -> None:
        rec = _record(Field(cfg.grid, values), t, pm, envs, flagged, keep_fields)
        traj.records.append(rec)
        if on_record is not None:
            on_record(rec)

    emit(u0.values, 0.0, breach)
    ops = _Operators(cfg.grid, pm.alpha, cfg.dealias)
    chi, r = pm.chi, pm.r
    U = ops.truncate(ops.fwd(u0.values))
    Uprev = Nprev = None

    t_base = 0.0  # time at which the current step size took effect
    k_local = 0  # steps taken since then
    remaining = nsteps
    rec_every = cfg.record_every
    k_total = 0
    try:
        while remaining > 0:
            N = _nonlinear(U, ops, chi, r)
            if cfg.adaptive and Uprev is not None:
                dU = np.linalg.norm(U - Uprev)
                if dU > 0 and dt * np.linalg.norm(N - Nprev) / dU > cfg.lipschitz_cap:
                    t_base += k_local * dt
                    k_local = 0
                    dt *= 0.5
                    remaining *= 2
                    rec_every *= 2
                    Uprev = Nprev = None
                    log.info("step halved to %.3e at t=%.6g", dt, t_base)
            if cfg.scheme == "IMEX1":
                Unew = _imex1(U, N, dt, ops)
            elif Uprev is None:
                Unew = _heun(U, N, dt, ops, chi, r)
            else:
                Unew = _sbdf2(U, Uprev, N, Nprev, dt, ops)
            Uprev, Nprev, U = U, N, Unew
            k_local += 1
            k_total += 1
            remaining -= 1
            t = t_base + k_local * dt
            values = ops.inv(U)
            breach = _check_state(values, cfg.neg_tol, k_total)
            if k_local % rec_every == 0 or remaining == 0:
                emit(values, cfg.t_end if remaining == 0 else t, breach)
            elif breach:
                log.warning("negativity breach at t=%.6g", t)
    except SolverError as exc:
        traj.status = "aborted"
        traj.message = str(exc)
        traj.steps = k_total
        exc.trajectory = traj
        raise
    traj.dt = dt
    traj.steps = k_total
    traj.u_final = Field(cfg.grid, ops.inv(U))
    return traj


def _coarse_view(values: np.ndarray, n_from: int, n_to: int, d: int) -> np.ndarray:
    stride = n_from // n_to
    sl = (slice(None, None, stride),) * d
    return values[sl]


def twin_run(
    u0: Field | Callable,
    cfgA: SolverConfig,
    cfgB: SolverConfig,
) -> list[tuple[float, float]]:
    """``L^2`` distance of two runs on the coarser grid at shared record times.

    ``u0`` is a callable sampled on each grid, or a :class:`Field` when both
    configurations use its grid.  Nodes of the coarse grid are a subset of
    those of the fine one, so the fine solution is sampled there directly.
    """
    gA, gB = cfgA.grid, cfgB.grid
    if gA.d != gB.d:
        raise ValueError("twin runs need the same dimension")
    if max(gA.n, gB.n) % min(gA.n, gB.n):
        raise ValueError("grids have no common refinement")
    if cfgA.params != cfgB.params:
        raise ValueError("twin runs need identical model parameters")

    def datum(g: TorusGrid) -> Field:
        if isinstance(u0, Field):
            if u0.grid != g:
                raise ValueError("a Field datum must live on both grids; pass a callable")
            return u0
        return Field.from_function(g, u0)

    ta = run(datum(gA), cfgA, keep_fields=True)
    tb = run(datum(gB), cfgB, keep_fields=True)
    coarse = gA if gA.n <= gB.n else gB
    out = []
    j = 0
    for ra in ta.records:
        while j < len(tb.records) and tb.records[j].t < ra.t - 1e-9 * max(1.0, ra.t):
            j += 1
        if j == len(tb.records):
            break
        rb = tb.records[j]
        if abs(rb.t - ra.t) > 1e-9 * max(1.0, ra.t):
            continue
        a = _coarse_view(ra.u, gA.n, coarse.n, gA.d)
        b = _coarse_view(rb.u, gB.n, coarse.n, gB.d)
        dist = math.sqrt(coarse.cell_volume * float(np.sum((a - b) ** 2)))
        out.append((ra.t, dist))
    return out
