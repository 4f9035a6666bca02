"""Command-line interface: ``fks {run,constants,oracle-check,twin,lemmas,sweep}``.

Exit codes: 0 success, 1 a certificate or check failed, 2 invalid input,
3 solver abort.  Logging goes to stderr and is controlled by ``FKS_LOG``
(``quiet``, ``info`` or ``debug``).
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import constants as K
from .dynamics import SolverError, run, twin_run
from .io import (
    ConfigError,
    RunConfig,
    initial_field,
    load_config,
    model_params,
    parse_config,
    positive_fields,
    random_trig,
    save_checkpoint,
    write_csv,
    write_ndjson,
)
from .torus import Field, TorusGrid, frac_laplacian_singular, frac_laplacian_spectral, inverse, transform
from .verifier import certify_lemmas_static, certify_trajectory, params_digest

log = logging.getLogger("fks")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

CONSTANT_KEYS = (
    "C_d_alpha", "P_d_alpha", "P_sharp", "M1", "M2", "M1_sharp", "M2_sharp",
    "R0", "R1", "R2", "R2_tilde", "R_inf_tilde", "R3_bar", "sigma", "s", "p",
    "gamma", "gamma_data_free", "S_entropy", "t0", "thm2b_threshold", "delta_thm2b",
)


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FKS_LOG", "quiet").lower(), logging.WARNING
    )
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def execute(cfg: RunConfig, base_dir: Path = Path(".")) -> tuple[int, list]:
    """Run one configuration, write its outputs and return ``(exit_code, certificates)``."""
    u0 = initial_field(cfg.solver.grid, cfg.initial_data)
    out = cfg.outputs
    csv_path = out.get("trajectory_csv_path")
    nd_path = out.get("certificates_ndjson_path")
    if cfg.eps_fallback:
        log.warning("no eps satisfies the supercriticality condition; using eps = r/2")
    try:
        traj = run(u0, cfg.solver)
    except SolverError as exc:
        log.error("solver aborted: %s", exc)
        if csv_path and exc.trajectory is not None:
            write_csv(base_dir / csv_path, exc.trajectory.records)
        return EXIT_SOLVER, []
    certs = certify_trajectory(traj, cfg.params)
    if csv_path:
        write_csv(base_dir / csv_path, traj.records)
    if nd_path:
        write_ndjson(base_dir / nd_path, certs)
    if out.get("checkpoint_path"):
        save_checkpoint(base_dir / out["checkpoint_path"], traj.u_final, cfg.solver.t_end, traj.dt, cfg.params)
    for c in certs:
        log.info("%s %s worst_margin=%s", c.claim_id, c.status, c.worst_margin)
    return (EXIT_FAIL if any(c.failed for c in certs) else EXIT_OK), certs


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    code, certs = execute(cfg, Path(args.config).resolve().parent if args.relative else Path("."))
    if args.print:
        for c in certs:
            print(json.dumps(c.to_json()))
    return code


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def constants_dict(d, alpha, chi, r, eps=None, L1=None, Lp=None, Linf=None) -> dict:
    pm, fallback = model_params(d, alpha, chi, r, eps)
    vol = (2.0 * math.pi) ** d
    norms = K.DataNorms(
        L1=vol if L1 is None else L1,
        Lp=vol ** (1.0 / pm.p) if Lp is None else Lp,
        Linf=1.0 if Linf is None else Linf,
    )
    pc = K.compute_constants(pm, norms).as_dict()
    out = {k: _json_value(pc[k]) for k in CONSTANT_KEYS}
    out["eps"] = pm.eps
    out["eps_fallback"] = fallback
    out["notes"] = pc["notes"]
    return out


def cmd_constants(args) -> int:
    out = constants_dict(args.d, args.alpha, args.chi, args.r, args.eps, args.L1, args.Lp, args.Linf)
    print(json.dumps(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle check
# ---------------------------------------------------------------------------


def oracle_check(d: int, alpha: float, n: int, seed: int, nodes: int = 16) -> dict:
    """Largest relative gap between the multiplier and the singular integral."""
    rng = np.random.default_rng(seed)
    g = TorusGrid(d, n)
    f = Field(g, random_trig(g, max(1, n // 4), rng))
    spec = inverse(frac_laplacian_spectral(transform(f), alpha)).values
    idx = rng.integers(0, n, size=(nodes, d))
    sing = frac_laplacian_singular(f, alpha, idx[:, 0] if d == 1 else idx)
    ref = spec[tuple(idx.T)]
    scale = 1.0 + float(np.max(np.abs(spec)))
    gap = float(np.max(np.abs(sing - ref)))
    return {"d": d, "alpha": alpha, "n": n, "seed": seed, "max_discrepancy": gap, "relative": gap / scale}


def cmd_oracle_check(args) -> int:
    res = oracle_check(args.d, args.alpha, args.n, args.seed, args.nodes)
    print(json.dumps(res))
    return EXIT_OK if res["relative"] < args.tol else EXIT_FAIL


# ---------------------------------------------------------------------------
# twin
# ---------------------------------------------------------------------------


def cmd_twin(args) -> int:
    a, b = load_config(args.config_a), load_config(args.config_b)
    if a.initial_data != b.initial_data:
        raise ConfigError("twin configurations must share the initial data")
    if a.params != b.params:
        raise ConfigError("twin configurations must share the model parameters")
    dists = twin_run(lambda *x: _sample(a.initial_data, x), a.solver, b.solver)
    lines = ["t,distance"] + [f"{t:.17g},{dd:.17g}" for t, dd in dists]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sample(spec: dict, nodes) -> np.ndarray:
    # evaluate the initial datum on whatever grid the nodes belong to
    n = nodes[0].shape[0]
    return initial_field(TorusGrid(len(nodes), n), spec).values


# ---------------------------------------------------------------------------
# lemmas
# ---------------------------------------------------------------------------


def cmd_lemmas(args) -> int:
    n = args.n if args.n is not None else (128 if args.d == 1 else 32)
    fields = positive_fields(args.d, n, args.count, args.seed)
    certs = certify_lemmas_static(fields, None, args.s, args.delta, alpha=args.alpha, p=args.p)
    for c in certs:
        print(json.dumps(c.to_json()))
    violations = certs[-1].info["violations"]
    return EXIT_FAIL if any(c.failed for c in certs) or violations else EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_axis(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ConfigError(f"--param expects name=v1,v2,..., got {spec!r}")
    name, vals = spec.split("=", 1)
    section, _, key = name.partition(".")
    if not key:
        section, key = "model", section
    return f"{section}.{key}", [json.loads(v) for v in vals.split(",")]


def _sweep_one(raw: dict, out_dir: str) -> tuple[str, int]:
    cfg = parse_config(raw)
    digest = params_digest(cfg.params)
    tag = f"{digest}-n{cfg.solver.grid.n}"
    raw = copy.deepcopy(raw)
    outs = raw.setdefault("outputs", {})
    outs["trajectory_csv_path"] = str(Path(out_dir) / f"{tag}.csv")
    outs["certificates_ndjson_path"] = str(Path(out_dir) / f"{tag}.ndjson")
    outs.pop("checkpoint_path", None)
    code, _ = execute(parse_config(raw))
    return tag, code


def cmd_sweep(args) -> int:
    base = json.loads(Path(args.config).read_text())
    axes = [_parse_axis(p) for p in args.param]
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    jobs = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        raw = copy.deepcopy(base)
        for (name, _), value in zip(axes, combo):
            section, key = name.split(".")
            raw.setdefault(section, {})[key] = value
        parse_config(raw)  # validate before launching anything
        jobs.append(raw)
    workers = args.jobs or os.cpu_count() or 1
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_one, jobs, [args.out_dir] * len(jobs)))
    worst = EXIT_OK
    for tag, code in results:
        print(f"{tag},{code}")
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fks", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration and certify it")
    p.add_argument("config")
    p.add_argument("--print", action="store_true", help="echo certificates to stdout")
    p.add_argument("--relative", action="store_true", help="resolve output paths against the config's directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("constants", help="print all constants as JSON")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--chi", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--L1", type=float, help="datum L^1 norm (default: the state u = 1)")
    p.add_argument("--Lp", type=float)
    p.add_argument("--Linf", type=float)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("oracle-check", help="compare the multiplier with the singular integral")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nodes", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("twin", help="distance between two runs on the coarser grid")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_twin)

    p = sub.add_parser("lemmas", help="check the appendix inequalities on random positive fields")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0, help="exponent of the dichotomy check")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_lemmas)

    p = sub.add_parser("sweep", help="run a cartesian product of parameter values")
    p.add_argument("config")
    p.add_argument("--param", action="append", default=[], help="section.key=v1,v2 (section defaults to model)")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", default="sweep")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, K.ParameterError, ValueError, FileNotFoundError) as exc:
        print(f"fks: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
