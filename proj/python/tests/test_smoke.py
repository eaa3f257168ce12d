import math
import os
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg
import scipy.special

import vpei

DATA = Path(os.environ.get("VPEI_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def test_expm_matches_scipy():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((4, 4))
    np.testing.assert_allclose(vpei.expm(m), scipy.linalg.expm(m), rtol=1e-13, atol=1e-13)
    assert vpei.det(m) == pytest.approx(np.linalg.det(m), rel=1e-12)


def test_phi1_scalar():
    z = np.array([[0.3]])
    assert vpei.phi(1, z)[0, 0] == pytest.approx(math.expm1(0.3) / 0.3, rel=1e-14)


def test_jacobi_elliptic_modulus_convention():
    k = 0.07 / 20.0
    sn, cn, dn = vpei.jacobi_elliptic(1.3, k)
    ref = scipy.special.ellipj(1.3, k * k)
    np.testing.assert_allclose((sn, cn, dn), ref[:3], rtol=1e-13)


def test_registry_and_tableaux():
    assert "duffing" in vpei.problem_names()
    assert "SSEI2" in vpei.method_names()
    t = vpei.tableau("SSEI2")
    assert t["a"].shape == (2, 2)
    assert sum(t["b"]) == pytest.approx(1.0)
    assert vpei.is_symplectic("SSEI1")


def test_integrate_grid():
    times, states = vpei.integrate("duffing", "SSEI1", 0.02, 1.0)
    assert len(times) == 51
    assert states.shape == (51, 2)
    np.testing.assert_array_equal(states[0], [0.0, 20.0])


def test_run_volume_and_files(tmp_path):
    s = vpei.run("duffing", "SSEI1", 1 / 50, 100.0, out_dir=tmp_path)
    assert s["exit_code"] == 0
    assert s["claim"]["rule"] == "VP-H"
    assert s["max_abs_det_minus_one"] <= 1e-10
    assert (tmp_path / "trajectory.csv").exists()
    assert vpei.run("duffing", "SSRK1", 0.5, 100.0)["exit_code"] == 3


def test_converge_and_volume_studies():
    r = vpei.converge("duffing", ["SSEI1"], [0.05], 10.0)
    assert r["slope"]["SSEI1"] is None
    rows = vpei.volume("divfree3d", ["SSEI1", "SSEI2"], [0.01], 10.0)
    assert rows[0]["claim"]["asserted"] and rows[0]["passed"]
    assert not rows[1]["claim"]["asserted"]
    assert max(abs(d - 1.0) for d in rows[0]["per_step_det"]) <= 1e-9


def test_jacobian_and_vp_condition():
    y = [0.3, 19.0]
    jac = vpei.step_jacobian("duffing", "SSEI2", 0.01, y)
    assert np.linalg.det(jac) == pytest.approx(vpei.volume_ratio("duffing", "SSEI2", 0.01, y), rel=1e-11)
    assert abs(vpei.vp_condition_residual("duffing", "SSEI2", 0.01, y)) <= 1e-10


def test_classify_and_errors():
    good = (DATA / "certificates" / "duffing_H.cert").read_text()
    assert vpei.classify("duffing", good)["passed"]
    bad = (DATA / "certificates" / "divfree3d_as_H.cert").read_text()
    assert not vpei.classify("divfree3d", bad)["passed"]
    with pytest.raises(vpei.UsageError):
        vpei.run("lorenz", "SSEI1", 0.1, 1.0)
    with pytest.raises(vpei.ParseError):
        vpei.classify("duffing", "tag=H\n")
    with pytest.raises(vpei.VpeiError):
        vpei.jacobi_elliptic(1.0, 1.5)
