import json
import math

import numpy as np
import pytest

from fks import constants as K
from fks.constants import DataNorms, ModelParams
from fks.dynamics import SolverConfig, TrajectoryRecord, run
from fks.io import positive_fields
from fks.torus import Field, TorusGrid
from fks.verifier import (
    CLAIMS,
    Certificate,
    certify_comparison_v,
    certify_l1_bernoulli,
    certify_lemma_lp,
    certify_lemmas_static,
    certify_sign_v,
    certify_thm1,
    certify_thm1_limsup,
    certify_thm2,
    certify_thm2b,
    certify_trajectory,
    certify_twin,
    fit_order,
    lemma_terms,
    params_digest,
)

DEMO = ModelParams(1, 1.0, 1.0, 0.6, 0.1)
CRIT = ModelParams.with_default_eps(1, 1.0, 0.012, 0.006)


def short_run(pm, fn, n=32, t_end=2.0, dt=0.01, every=10):
    g = TorusGrid(pm.d, n)
    return run(Field.from_function(g, fn), SolverConfig(g, pm, t_end=t_end, dt=dt, record_every=every))


def fake_records(times, linf):
    return [
        TrajectoryRecord(t, 2 * math.pi, 1.0, 1.0, m, 0.0, 1.0, m - 1.0, -m, -1.0, envelopes={})
        for t, m in zip(times, linf)
    ]


@pytest.fixture(scope="module")
def demo_traj():
    return short_run(DEMO, lambda x: 1 + np.cos(x), n=64, t_end=3.0, dt=1e-2, every=5)


class TestCertificate:
    def test_json_shape(self, demo_traj):
        cert = certify_l1_bernoulli(demo_traj, DEMO)
        out = cert.to_json()
        assert list(out) == ["claim_id", "status", "worst_margin", "samples", "tolerances", "params_digest"]
        assert out["tolerances"] == {"tol_rel": 1e-6, "tol_abs": 1e-8}
        json.dumps(out)

    def test_non_finite_margin_is_null(self):
        cert = Certificate("SIGN_V", "pass", math.inf, 0, {}, "x")
        assert cert.to_json()["worst_margin"] is None

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            Certificate("THM9", "pass", 0.0, 0, {}, "x")
        with pytest.raises(ValueError):
            Certificate("SIGN_V", "maybe", 0.0, 0, {}, "x")

    def test_claims_complete(self):
        for claim in ("THM1_LINF", "THM2B_CONVERGENCE", "THM3_TWIN", "LEM_A3_DICHOTOMY", "COMPARISON_V"):
            assert claim in CLAIMS

    def test_digest_stable(self):
        assert params_digest(DEMO) == params_digest(ModelParams(1, 1.0, 1.0, 0.6, 0.1))
        assert params_digest(DEMO) != params_digest(ModelParams(1, 1.0, 1.0, 0.6, 0.2))

    def test_pure(self, demo_traj):
        a = [c.to_json() for c in certify_trajectory(demo_traj, DEMO)]
        b = [c.to_json() for c in certify_trajectory(demo_traj, DEMO)]
        assert a == b


class TestTrajectoryCertificates:
    def test_demo_passes(self, demo_traj):
        certs = {c.claim_id: c for c in certify_trajectory(demo_traj, DEMO)}
        for claim in ("L1_BERNOULLI", "LEMMA_LP", "THM1_LINF", "THM1_LIMSUP", "SIGN_V", "COMPARISON_V"):
            assert certs[claim].status == "pass", claim
        assert certs["THM2_OSC_DECAY"].status == "outside_hypotheses"

    def test_lp_margin_zero_at_start(self, demo_traj):
        cert = certify_lemma_lp(demo_traj.records[:1], DEMO)
        assert cert.worst_margin == pytest.approx(0.0, abs=1e-12)

    def test_steady_state(self):
        traj = short_run(DEMO, lambda x: 1 + 0 * x)
        cert = certify_thm1(traj, DEMO)
        assert cert.status == "pass"
        assert cert.worst_margin >= 1.0
        osc = certify_thm2(traj, DEMO)
        assert osc.worst_margin == 0.0

    def test_subcritical_gate(self):
        pm = ModelParams(1, 0.3, 1.0, 0.1, 0.05)
        traj = short_run(pm, lambda x: 1 + 0.5 * np.cos(x))
        cert = certify_thm1(traj, pm)
        assert cert.status == "outside_hypotheses"
        assert "envelope" in cert.info

    def test_sigma_above_one_still_evaluated(self):
        pm = ModelParams(1, 1.9, 1.0, 0.6, 0.1)
        traj = short_run(pm, lambda x: 1 + 0.5 * np.cos(x))
        cert = certify_thm1(traj, pm)
        assert cert.status == "outside_hypotheses"
        assert cert.samples >= len(traj.records)
        assert cert.worst_margin > 0

    def test_thm1_detects_breach(self):
        recs = fake_records([0.0, 1.0], [1.0, 1e12])
        assert certify_thm1(recs, DEMO).status == "fail"
        assert certify_thm1_limsup(recs, DEMO).status == "fail"

    def test_tolerance_rule(self):
        # a quantity just inside bound (1 + tol_rel) + tol_abs passes
        recs = fake_records([0.0, 1.0], [1.0, 1.0])
        env = K.compute_R_inf_tilde(DEMO)
        ok = fake_records([0.0, 10.0], [1.0, env * (1 + 0.5e-6)])
        bad = fake_records([0.0, 10.0], [1.0, env * (1 + 1e-5)])
        assert certify_thm1_limsup(recs, DEMO).status == "pass"
        assert certify_thm1_limsup(ok, DEMO, tol_abs=env * 1e-6).status == "pass"
        assert certify_thm1_limsup(bad, DEMO).status == "fail"

    def test_sign_certificates_flag_positive_v(self):
        recs = fake_records([0.0], [1.0])
        recs[0].v_max = 0.1
        assert certify_sign_v(recs, DEMO).status == "fail"
        assert certify_comparison_v(recs, DEMO).status == "fail"
        low = fake_records([0.0], [1.0])
        low[0].v_min = -5.0
        assert certify_sign_v(low, DEMO).status == "pass"
        assert certify_comparison_v(low, DEMO).status == "fail"

    def test_thm2_gate_reports_lhs(self):
        traj = short_run(DEMO, lambda x: 1 + 0.1 * np.cos(x))
        cert = certify_thm2(traj, DEMO)
        assert cert.status == "outside_hypotheses"
        assert cert.info["ssc_lhs"] > 0

    def test_thm2_rate(self):
        pm = ModelParams.with_default_eps(1, 1.0, 0.00501, 0.005)
        traj = short_run(pm, lambda x: 1 + 1e-3 * np.cos(x), n=32, t_end=10.0, dt=1e-2, every=10)
        cert = certify_thm2(traj, pm, data_norms=DataNorms(2 * math.pi, traj.records[0].Lp, 1.001, osc=2e-3))
        assert cert.info["gamma"] > 0
        assert cert.status == "pass"

    def test_fit_order(self):
        x = np.linspace(0, 1, 5)
        assert fit_order(x, 3 * x + 1) == pytest.approx(3.0)


class TestThm2b:
    def test_constant_immediate(self):
        traj = short_run(CRIT, lambda x: 1 + 0 * x, t_end=1.0, dt=0.1, every=1)
        cert = certify_thm2b(traj, CRIT)
        assert cert.status == "pass"
        assert cert.info["final_deviation"] == 0.0

    def test_gate(self):
        cert = certify_thm2b(short_run(DEMO, lambda x: 1 + 0 * x, t_end=1.0, dt=0.1), DEMO)
        assert cert.status == "outside_hypotheses"

    def test_short_run_inconclusive(self):
        traj = short_run(CRIT, lambda x: 2 + np.cos(x), t_end=10.0, dt=0.1, every=10)
        cert = certify_thm2b(traj, CRIT)
        assert cert.status == "inconclusive"

    def test_derivative_clause(self):
        recs = fake_records([0.0, 1.0, 2.0], [10.0, 10.0, 10.0])
        cert = certify_thm2b(recs, CRIT, target=100.0)
        assert cert.info["derivative_checks"] == 1
        rising = fake_records([0.0, 1.0, 2.0], [10.0, 11.0, 12.0])
        assert certify_thm2b(rising, CRIT, target=100.0).status == "fail"

    @pytest.mark.slow
    def test_mass_crossing(self):
        g = TorusGrid(1, 64)
        traj = run(Field.from_function(g, lambda x: 2 + np.cos(x)), SolverConfig(g, CRIT, t_end=600.0, record_every=20))
        cert = certify_thm2b(traj, CRIT, target=1.0)
        level = 2 * math.pi + K.delta_thm2b(CRIT.chi)
        t_pred = cert.info["predicted_crossing_time"]
        expected = K.bernoulli_crossing_time(4 * math.pi, CRIT.r, 1, level)
        assert t_pred == pytest.approx(expected)
        assert 300 < t_pred < 450
        # the mass tracks its envelope closely; entry lies within one record interval
        spacing = traj.records[1].t - traj.records[0].t
        entry = next(r.t for r in traj.records if r.L1 <= level)
        assert entry <= t_pred + spacing
        assert cert.status == "pass"


class TestTwin:
    def test_order(self):
        dts = [4e-3, 2e-3, 1e-3]
        cert = certify_twin([4 * x**2 for x in dts], dts, ModelParams(1, 1.5, 1.0, 0.6, 0.2), grid_distance=1e-12)
        assert cert.info["order"] == pytest.approx(2.0)
        assert cert.status == "pass"

    def test_identical(self):
        cert = certify_twin([0.0, 0.0, 0.0], [1e-2, 5e-3, 2.5e-3], ModelParams(1, 1.5, 1.0, 0.6, 0.2))
        assert cert.status == "pass"
        assert cert.worst_margin == 0.0

    def test_gate_and_failures(self):
        dts = [4e-3, 2e-3, 1e-3]
        low = ModelParams(1, 0.8, 1.0, 0.6, 0.2)
        assert certify_twin([1e-3, 1e-3, 1e-3], dts, low).status == "outside_hypotheses"
        hi = ModelParams(1, 1.5, 1.0, 0.6, 0.2)
        assert certify_twin([1e-3, 1e-3, 1e-3], dts, hi).status == "fail"
        assert certify_twin(dts, dts, hi, grid_distance=1e-6).status == "fail"
        with pytest.raises(ValueError):
            certify_twin([1.0, 0.5], dts[:2], hi)


class TestLemmas:
    def test_constant_saturates_poincare(self):
        f = Field(TorusGrid(1, 64), np.full(64, 2.0))
        rhs, lhs = lemma_terms(f, 1.0, 1.0, 0.1)["A2"]
        assert rhs == pytest.approx(lhs, rel=1e-13)

    def test_dichotomy_hand_example(self):
        f = Field.from_function(TorusGrid(1, 128), lambda x: 1 + np.cos(x) + 1e-12)
        terms = lemma_terms(f, 1.0, 1.0, 0.1)
        bound, value = terms["A3_i"]
        assert value == pytest.approx(2.0, abs=1e-9)
        assert bound == pytest.approx(4.0, rel=1e-9)

    def test_a1a_is_identity_at_s1(self):
        # at s = 1 both sides equal the H^{alpha/2} energy of u
        f = positive_fields(1, 64, 1, seed=3)[0]
        rhs, lhs = lemma_terms(f, 1.3, 1.0, 0.1)["A1a"]
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("d,n", [(1, 64), (2, 16)])
    def test_random_fields(self, d, n):
        certs = certify_lemmas_static(positive_fields(d, n, 10, seed=5), None, 0.5, 0.05, alpha=1.0)
        assert [c.status for c in certs] == ["pass", "pass", "pass"]
        assert certs[2].info["violations"] == 0

    def test_admissibility(self):
        fields = positive_fields(1, 64, 1, seed=0)
        with pytest.raises(ValueError):
            certify_lemmas_static(fields, DEMO, 1.0, 0.3)
        with pytest.raises(ValueError):
            certify_lemmas_static(fields, DEMO, 1.5, 0.1)
        with pytest.raises(ValueError):
            lemma_terms(Field(TorusGrid(1, 16), np.zeros(16)), 1.0, 1.0, 0.1)
