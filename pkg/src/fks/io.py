"""Run configuration, initial data, and the on-disk formats.

Formats
-------
Trajectory CSV
    Header ``t,L1,Lp,L2,Linf,Halpha2,min_u,osc,v_min,v_max,env_L1,env_Lp,env_Linf,flags``;
    numbers with 17 significant digits, flags joined by ``;``.
Certificates NDJSON
    One JSON object per line with keys ``claim_id, status, worst_margin,
    samples, tolerances, params_digest`` in that order.
Checkpoint
    Little-endian header ``magic "FKSL", uint16 version, uint8 d, uint32 n,
    float64 t, dt, alpha, chi, r, eps``, then ``n^d`` float64 samples in
    row-major order, then the CRC-32 of the payload as uint32.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .constants import ModelParams, ParameterError
from .dynamics import SolverConfig, TrajectoryRecord
from .torus import Field, TorusGrid

__all__ = [
    "ConfigError",
    "CheckpointError",
    "RunConfig",
    "CSV_COLUMNS",
    "FORMAT_VERSION",
    "parse_config",
    "load_config",
    "model_params",
    "initial_field",
    "random_trig",
    "positive_fields",
    "format_number",
    "write_csv",
    "read_csv",
    "write_ndjson",
    "save_checkpoint",
    "load_checkpoint",
]

FORMAT_VERSION = 1
MAGIC = b"FKSL"
_HEADER = struct.Struct("<4sHBI6d")

CSV_COLUMNS = (
    "t", "L1", "Lp", "L2", "Linf", "Halpha2", "min_u", "osc",
    "v_min", "v_max", "env_L1", "env_Lp", "env_Linf", "flags",
)

INITIAL_KINDS = ("constant", "perturbed_one", "cosine_bump", "random_trig")


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SCHEMA = {
    "model": {"d": int, "alpha": float, "chi": float, "r": float, "eps": float},
    "grid": {"d": int, "n": int},
    "solver": {
        "dt": float,
        "t_end": float,
        "scheme": str,
        "dealias": bool,
        "record_every": int,
        "neg_tol": float,
        "adaptive": bool,
    },
    "initial_data": {"kind": str, "amplitude": float, "modes": list, "seed": int},
    "outputs": {
        "trajectory_csv_path": str,
        "certificates_ndjson_path": str,
        "checkpoint_path": str,
        "record_every": int,
    },
}
_REQUIRED = {
    "model": ("alpha", "chi", "r"),
    "grid": ("n",),
    "solver": ("t_end",),
    "initial_data": ("kind",),
    "outputs": (),
}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    solver: SolverConfig
    initial_data: dict
    outputs: dict
    eps_fallback: bool = False


def _typed(section: str, key: str, value: Any, kind: type) -> Any:
    if value is None and key in ("dt", "seed", "eps"):
        return None
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{section}.{key} must be of type {kind.__name__}")
    return value


def _section(raw: dict, name: str) -> dict:
    body = raw.get(name, {})
    if not isinstance(body, dict):
        raise ConfigError(f"{name} must be an object")
    schema = _SCHEMA[name]
    unknown = sorted(set(body) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED[name] if k not in body]
    if missing:
        raise ConfigError(f"missing keys in {name}: {', '.join(missing)}")
    return {k: _typed(name, k, v, schema[k]) for k, v in body.items()}


def model_params(d: int, alpha: float, chi: float, r: float, eps: Optional[float] = None) -> tuple[ModelParams, bool]:
    """Build parameters; without ``eps`` use the default rule.

    When no ``eps`` satisfies the supercriticality condition the run is still
    allowed with ``eps = r/2``; the second return value flags this.
    """
    if eps is not None:
        return ModelParams(d, alpha, chi, r, eps), False
    try:
        return ModelParams.with_default_eps(d, alpha, chi, r), False
    except ParameterError as exc:
        if "no admissible eps" not in str(exc):
            raise
        return ModelParams(d, alpha, chi, r, 0.5 * r), True


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    sec = {name: _section(raw, name) for name in _SCHEMA}
    model, grid, solver, init, outputs = (sec[k] for k in ("model", "grid", "solver", "initial_data", "outputs"))

    d = model.get("d", grid.get("d"))
    if d is None:
        raise ConfigError("dimension missing: set model.d or grid.d")
    for name, body in (("model", model), ("grid", grid)):
        if body.get("d", d) != d:
            raise ConfigError(f"{name}.d disagrees with the other sections")
    try:
        params, fallback = model_params(d, model["alpha"], model["chi"], model["r"], model.get("eps"))
        tgrid = TorusGrid(d, grid["n"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    rec_s, rec_o = solver.pop("record_every", None), outputs.get("record_every")
    if rec_s is not None and rec_o is not None and rec_s != rec_o:
        raise ConfigError("solver.record_every and outputs.record_every disagree")
    record_every = rec_s if rec_s is not None else (rec_o if rec_o is not None else 1)
    try:
        scfg = SolverConfig(grid=tgrid, params=params, record_every=record_every, **solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    kind = init["kind"]
    if kind not in INITIAL_KINDS:
        raise ConfigError(f"initial_data.kind must be one of {INITIAL_KINDS}")
    if kind == "random_trig" and init.get("seed") is None:
        raise ConfigError("initial_data.seed is mandatory for random_trig")
    return RunConfig(params, scfg, init, outputs, fallback)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def _wavevectors(modes: Optional[list], d: int, default: list) -> list[tuple[int, ...]]:
    out = []
    for m in modes if modes is not None else default:
        if isinstance(m, int) and not isinstance(m, bool):
            out.append((m,) + (0,) * (d - 1))
        elif isinstance(m, list) and len(m) == d and all(isinstance(x, int) for x in m):
            out.append(tuple(m))
        else:
            raise ConfigError(f"bad mode specification {m!r}")
    return out


def random_trig(grid: TorusGrid, kmax: int, rng: np.random.Generator, terms: int = 6) -> np.ndarray:
    """Real trigonometric polynomial with ``terms`` random modes ``|k_j| <= kmax``."""
    X = grid.nodes()
    v = np.zeros(grid.shape)
    for _ in range(terms):
        k = rng.integers(-kmax, kmax + 1, size=grid.d)
        a, b = rng.normal(size=2)
        ph = sum(kj * xj for kj, xj in zip(k, X))
        v += a * np.cos(ph) + b * np.sin(ph)
    return v


def positive_fields(d: int, n: int, count: int, seed: int) -> list[Field]:
    """Fields ``q^2 + c`` with ``q`` a random polynomial of degree ``n/16``, ``c in [0.05, 1]``."""
    rng = np.random.default_rng(seed)
    g = TorusGrid(d, n)
    out = []
    for _ in range(count):
        q = random_trig(g, max(1, n // 16), rng, terms=4)
        out.append(Field(g, q * q + rng.uniform(0.05, 1.0)))
    return out


def initial_field(grid: TorusGrid, spec: dict) -> Field:
    """Sample the initial datum described by ``spec`` (``initial_data`` section)."""
    kind = spec["kind"]
    amp = spec.get("amplitude")
    X = grid.nodes()
    if kind == "constant":
        return Field(grid, np.full(grid.shape, 1.0 if amp is None else amp))
    if kind == "perturbed_one":
        amp = 0.1 if amp is None else amp
        v = np.ones(grid.shape)
        for k in _wavevectors(spec.get("modes"), grid.d, [1]):
            v = v + amp * np.cos(sum(kj * xj for kj, xj in zip(k, X)))
        return Field(grid, v)
    if kind == "cosine_bump":
        amp = 1.0 if amp is None else amp
        v = np.full(grid.shape, amp)
        for xj in X:
            v = v * (1.0 + np.cos(xj))
        return Field(grid, v)
    if kind == "random_trig":
        amp = 0.5 if amp is None else amp
        if not 0.0 <= amp <= 1.0:
            raise ConfigError("random_trig amplitude must lie in [0, 1] to keep u0 >= 0")
        modes = spec.get("modes")
        kmax = modes[0] if modes else 4
        q = random_trig(grid, kmax, np.random.default_rng(spec["seed"]))
        q = q / max(float(np.max(np.abs(q))), 1e-300)
        return Field(grid, 1.0 + amp * q)
    raise ConfigError(f"unknown initial data kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV / NDJSON
# ---------------------------------------------------------------------------


def format_number(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _row(rec: TrajectoryRecord) -> str:
    env = rec.envelopes
    vals = [
        rec.t, rec.L1, rec.Lp, rec.L2, rec.Linf, rec.Halpha2, rec.min_u, rec.osc,
        rec.v_min, rec.v_max,
        env.get("L1", math.inf), env.get("Lp", math.inf), env.get("Linf", math.inf),
    ]
    return ",".join(format_number(v) for v in vals) + "," + ";".join(rec.flags)


def write_csv(path: str | Path, records: Iterable[TrajectoryRecord]) -> None:
    lines = [",".join(CSV_COLUMNS)] + [_row(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> list[TrajectoryRecord]:
    """Rebuild records (without fields) from a trajectory CSV."""
    text = Path(path).read_text().splitlines()
    if not text or tuple(text[0].split(",")) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header")
    out = []
    for line in text[1:]:
        parts = line.split(",")
        nums = [float(p) for p in parts[:-1]]
        env = {k: v for k, v in zip(("L1", "Lp", "Linf"), nums[10:13]) if math.isfinite(v)}
        flags = tuple(f for f in parts[-1].split(";") if f)
        out.append(TrajectoryRecord(*nums[:10], envelopes=env, flags=flags))
    return out


def write_ndjson(path: str | Path, certificates: Iterable) -> None:
    lines = [json.dumps(c.to_json()) for c in certificates]
    Path(path).write_text("".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# checkpoint
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, u: Field, t: float, dt: float, params: ModelParams) -> None:
    g = u.grid
    payload = np.ascontiguousarray(u.values, dtype="<f8").tobytes(order="C")
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, g.d, g.n, t, dt, params.alpha, params.chi, params.r, params.eps)
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(head + payload + crc)


def load_checkpoint(path: str | Path) -> tuple[Field, float, float, ModelParams]:
    """Return ``(u, t, dt, params)``; raises :class:`CheckpointError` on corruption."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + 4:
        raise CheckpointError("file too short")
    magic, version, d, n, t, dt, alpha, chi, r, eps = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("bad magic")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    grid = TorusGrid(d, n)
    size = 8 * grid.size
    if len(blob) != _HEADER.size + size + 4:
        raise CheckpointError("payload size does not match the header")
    payload = blob[_HEADER.size:_HEADER.size + size]
    (crc,) = struct.unpack_from("<I", blob, _HEADER.size + size)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("CRC mismatch")
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(float)
    return Field(grid, values), t, dt, ModelParams(d, alpha, chi, r, eps)
