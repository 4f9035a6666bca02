import json
import math
import subprocess
import sys


from fks.cli import main

CONST1 = {
    "model": {"d": 1, "alpha": 1.0, "chi": 1.0, "r": 0.6, "eps": 0.1},
    "grid": {"n": 32},
    "solver": {"t_end": 2.0, "dt": 0.01},
    "initial_data": {"kind": "constant", "amplitude": 1.0},
    "outputs": {"trajectory_csv_path": "traj.csv", "certificates_ndjson_path": "certs.ndjson", "record_every": 20},
}


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def csv_column(path, name):
    lines = path.read_text().splitlines()
    idx = lines[0].split(",").index(name)
    return [float(line.split(",")[idx]) for line in lines[1:]]


class TestRun:
    def test_constant_one(self, tmp_path):
        cfg = write(tmp_path, CONST1)
        assert main(["run", str(cfg), "--relative"]) == 0
        assert all(v == 0.0 for v in csv_column(tmp_path / "traj.csv", "osc"))
        certs = [json.loads(line) for line in (tmp_path / "certs.ndjson").read_text().splitlines()]
        assert {c["claim_id"] for c in certs} >= {"THM1_LINF", "L1_BERNOULLI", "SIGN_V"}

    def test_envelopes_dominate(self, tmp_path):
        raw = json.loads(json.dumps(CONST1))
        raw["initial_data"] = {"kind": "perturbed_one", "amplitude": 1.0}
        raw["model"]["eps"] = 0.1
        assert main(["run", str(write(tmp_path, raw)), "--relative"]) == 0
        path = tmp_path / "traj.csv"
        for norm, env in (("L1", "env_L1"), ("Lp", "env_Lp"), ("Linf", "env_Linf")):
            for a, b in zip(csv_column(path, norm), csv_column(path, env)):
                assert a <= b * (1 + 1e-6) + 1e-8

    def test_deep_subcritical(self, tmp_path, capsys):
        raw = json.loads(json.dumps(CONST1))
        raw["model"] = {"d": 1, "alpha": 0.3, "chi": 1.0, "r": 0.1}
        raw["initial_data"] = {"kind": "perturbed_one", "amplitude": 0.5}
        assert main(["run", str(write(tmp_path, raw)), "--relative", "--print"]) == 0
        certs = {c["claim_id"]: c for c in map(json.loads, capsys.readouterr().out.splitlines())}
        assert certs["THM1_LINF"]["status"] == "outside_hypotheses"
        assert all(math.isfinite(v) for v in csv_column(tmp_path / "traj.csv", "Linf"))

    def test_checkpoint_written(self, tmp_path):
        raw = json.loads(json.dumps(CONST1))
        raw["outputs"]["checkpoint_path"] = "state.bin"
        assert main(["run", str(write(tmp_path, raw)), "--relative"]) == 0
        assert (tmp_path / "state.bin").read_bytes()[:4] == b"FKSL"

    def test_invalid_config(self, tmp_path):
        raw = json.loads(json.dumps(CONST1))
        raw["model"]["gamma"] = 1.0
        assert main(["run", str(write(tmp_path, raw))]) == 2

    def test_solver_abort(self, tmp_path):
        raw = json.loads(json.dumps(CONST1))
        raw["solver"] = {"t_end": 100.0, "dt": 5.0}
        raw["initial_data"] = {"kind": "constant", "amplitude": 50.0}
        assert main(["run", str(write(tmp_path, raw)), "--relative"]) == 3


class TestOtherCommands:
    def test_constants(self, capsys):
        assert main(["constants", "--d", "1", "--alpha", "1", "--chi", "1", "--r", "0.6", "--eps", "0.1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["P_sharp"] == 1
        assert out["M1_sharp"] == 0.6366197723675814
        for key in ("C_d_alpha", "P_d_alpha", "M1", "M2", "R0", "R1", "R2", "R2_tilde", "sigma", "gamma", "S_entropy", "thm2b_threshold"):
            assert key in out

    def test_constants_bad_params(self):
        assert main(["constants", "--d", "1", "--alpha", "1", "--chi", "0.5", "--r", "0.6"]) == 2

    def test_oracle_check(self, capsys):
        assert main(["oracle-check", "--d", "1", "--alpha", "1", "--n", "256", "--seed", "7"]) == 0
        assert json.loads(capsys.readouterr().out)["max_discrepancy"] < 1e-5

    def test_lemmas(self, capsys):
        assert main(["lemmas", "--count", "10", "--seed", "1", "--s", "1", "--delta", "0.1"]) == 0
        certs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert [c["claim_id"] for c in certs] == ["LEM_A1_ENTROPY", "LEM_A2_POINCARE", "LEM_A3_DICHOTOMY"]
        assert certs[0]["samples"] == 30

    def test_twin(self, tmp_path):
        raw = json.loads(json.dumps(CONST1))
        raw["model"]["alpha"] = 1.5
        raw["initial_data"] = {"kind": "perturbed_one", "amplitude": 0.5}
        a = write(tmp_path, raw, "a.json")
        raw["grid"]["n"] = 64
        b = write(tmp_path, raw, "b.json")
        out = tmp_path / "twin.csv"
        assert main(["twin", str(a), str(b), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "t,distance"
        assert max(float(r.split(",")[1]) for r in rows[1:]) < 1e-8

    def test_sweep(self, tmp_path, capsys):
        raw = json.loads(json.dumps(CONST1))
        raw["initial_data"] = {"kind": "perturbed_one", "amplitude": 0.5}
        cfg = write(tmp_path, raw)
        out_dir = tmp_path / "sweep"
        code = main(["sweep", str(cfg), "--param", "r=0.5,0.6", "--param", "grid.n=16,32", "--jobs", "2", "--out-dir", str(out_dir)])
        assert code == 0
        assert len(capsys.readouterr().out.splitlines()) == 4
        assert len(list(out_dir.glob("*.csv"))) == 4
        assert len(list(out_dir.glob("*.ndjson"))) == 4

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "fks", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for sub in ("run", "constants", "oracle-check", "twin", "lemmas", "sweep"):
            assert sub in res.stdout
