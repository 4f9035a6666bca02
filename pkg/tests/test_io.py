import json
import math
import struct

import numpy as np
import pytest

from fks.constants import ModelParams
from fks.dynamics import SolverConfig, run
from fks.io import (
    CSV_COLUMNS,
    CheckpointError,
    ConfigError,
    format_number,
    initial_field,
    load_checkpoint,
    load_config,
    parse_config,
    positive_fields,
    read_csv,
    save_checkpoint,
    write_csv,
    write_ndjson,
)
from fks.torus import Field, TorusGrid
from fks.verifier import certify_trajectory

BASE = {
    "model": {"d": 1, "alpha": 1.0, "chi": 1.0, "r": 0.6, "eps": 0.1},
    "grid": {"n": 32},
    "solver": {"t_end": 1.0, "dt": 0.01},
    "initial_data": {"kind": "perturbed_one", "amplitude": 0.5},
    "outputs": {"record_every": 10},
}


def with_(section, **kw):
    raw = json.loads(json.dumps(BASE))
    raw[section].update(kw)
    return raw


class TestConfig:
    def test_parse(self):
        cfg = parse_config(BASE)
        assert cfg.params == ModelParams(1, 1.0, 1.0, 0.6, 0.1)
        assert cfg.solver.record_every == 10
        assert cfg.solver.grid == TorusGrid(1, 32)
        assert not cfg.eps_fallback

    @pytest.mark.parametrize(
        "raw",
        [
            with_("model", beta=1.0),
            with_("solver", method="rk4"),
            dict(BASE, extra={}),
            with_("initial_data", kind="gaussian"),
            with_("initial_data", kind="random_trig"),
            with_("solver", record_every=5),
            with_("grid", n=48),
            with_("grid", d=2),
            with_("model", alpha="one"),
            with_("solver", scheme="RK4"),
            with_("model", chi=0.5),
        ],
    )
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_missing_required(self):
        raw = with_("model")
        del raw["model"]["chi"]
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_default_eps_and_fallback(self):
        raw = with_("model")
        del raw["model"]["eps"]
        assert parse_config(raw).params.eps == pytest.approx(0.3)
        deep = with_("model", alpha=0.3, r=0.1)
        del deep["model"]["eps"]
        cfg = parse_config(deep)
        assert cfg.eps_fallback
        assert cfg.params.eps == pytest.approx(0.05)

    def test_load_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)


class TestInitialData:
    def test_kinds(self):
        g = TorusGrid(1, 32)
        (x,) = g.nodes()
        assert np.all(initial_field(g, {"kind": "constant", "amplitude": 2.0}).values == 2.0)
        assert np.allclose(initial_field(g, {"kind": "perturbed_one", "amplitude": 0.3, "modes": [2]}).values, 1 + 0.3 * np.cos(2 * x))
        assert np.allclose(initial_field(g, {"kind": "cosine_bump", "amplitude": 1.0}).values, 1 + np.cos(x))

    def test_perturbed_2d(self):
        g = TorusGrid(2, 16)
        X, Y = g.nodes()
        f = initial_field(g, {"kind": "perturbed_one", "amplitude": 0.1, "modes": [[1, 2]]})
        assert np.allclose(f.values, 1 + 0.1 * np.cos(X + 2 * Y))

    def test_random_trig_seeded(self):
        g = TorusGrid(2, 16)
        spec = {"kind": "random_trig", "amplitude": 0.5, "seed": 3}
        a, b = initial_field(g, spec).values, initial_field(g, spec).values
        assert np.array_equal(a, b)
        assert a.min() >= 0.5 - 1e-14
        assert np.max(np.abs(a - 1)) == pytest.approx(0.5)
        with pytest.raises(ConfigError):
            initial_field(g, {"kind": "random_trig", "amplitude": 1.5, "seed": 1})

    def test_positive_fields(self):
        fields = positive_fields(1, 64, 5, seed=0)
        assert len(fields) == 5
        assert all(f.values.min() >= 0.05 for f in fields)
        again = positive_fields(1, 64, 5, seed=0)
        assert all(np.array_equal(a.values, b.values) for a, b in zip(fields, again))


class TestCsv:
    def test_format(self):
        assert format_number(0.1) == "0.10000000000000001"
        assert format_number(math.inf) == "inf"
        assert float(format_number(1 / 3)) == 1 / 3

    def test_round_trip_preserves_verdicts(self, tmp_path):
        cfg = parse_config(BASE)
        traj = run(initial_field(cfg.solver.grid, cfg.initial_data), cfg.solver)
        path = tmp_path / "t.csv"
        write_csv(path, traj.records)
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        back = read_csv(path)
        for a, b in zip(traj.records, back):
            assert (a.t, a.L1, a.Linf, a.osc, a.v_max) == (b.t, b.L1, b.Linf, b.osc, b.v_max)
        mem = [c.to_json() for c in certify_trajectory(traj, cfg.params)]
        disk = [c.to_json() for c in certify_trajectory(back, cfg.params)]
        assert mem == disk

    def test_byte_identical(self, tmp_path):
        cfg = parse_config(BASE)
        u0 = initial_field(cfg.solver.grid, cfg.initial_data)
        for name in ("a", "b"):
            traj = run(u0, cfg.solver)
            write_csv(tmp_path / f"{name}.csv", traj.records)
            write_ndjson(tmp_path / f"{name}.ndjson", certify_trajectory(traj, cfg.params))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.ndjson").read_bytes() == (tmp_path / "b.ndjson").read_bytes()

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_csv(p)


class TestCheckpoint:
    def field(self):
        g = TorusGrid(2, 16)
        return Field(g, np.random.default_rng(0).uniform(size=g.shape))

    def test_round_trip(self, tmp_path):
        u = self.field()
        pm = ModelParams(2, 1.5, 1.0, 0.6, 0.2)
        p = tmp_path / "c.bin"
        save_checkpoint(p, u, 1.25, 1e-3, pm)
        v, t, dt, pm2 = load_checkpoint(p)
        assert np.array_equal(u.values, v.values)
        assert (t, dt, pm2) == (1.25, 1e-3, pm)
        blob = p.read_bytes()
        assert blob[:4] == b"FKSL"
        assert len(blob) == struct.calcsize("<4sHBI6d") + 8 * 256 + 4
        save_checkpoint(tmp_path / "d.bin", v, t, dt, pm2)
        assert (tmp_path / "d.bin").read_bytes() == blob

    @pytest.mark.parametrize("where", ["payload", "magic", "truncate"])
    def test_corruption(self, tmp_path, where):
        p = tmp_path / "c.bin"
        save_checkpoint(p, self.field(), 0.0, 1e-3, ModelParams(2, 1.5, 1.0, 0.6, 0.2))
        blob = bytearray(p.read_bytes())
        if where == "payload":
            blob[100] ^= 0x01
        elif where == "magic":
            blob[0:4] = b"XXXX"
        else:
            blob = blob[:50]
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_resume_matches_direct(self, tmp_path):
        pm = ModelParams(1, 1.0, 1.0, 0.6, 0.1)
        g = TorusGrid(1, 32)
        u0 = Field.from_function(g, lambda x: 1 + 0.5 * np.cos(x))
        first = run(u0, SolverConfig(g, pm, t_end=0.5, dt=0.01, scheme="IMEX1"))
        save_checkpoint(tmp_path / "c.bin", first.u_final, 0.5, 0.01, pm)
        v, _, dt, pm2 = load_checkpoint(tmp_path / "c.bin")
        second = run(v, SolverConfig(g, pm2, t_end=0.5, dt=dt, scheme="IMEX1"))
        direct = run(u0, SolverConfig(g, pm, t_end=1.0, dt=0.01, scheme="IMEX1"))
        assert np.allclose(second.u_final.values, direct.u_final.values, atol=1e-13)
