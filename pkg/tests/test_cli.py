import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mscpd import io as mio
from mscpd.calibration import calibrate_thresholds
from mscpd.cli import main
from mscpd.errors import DataError
from mscpd.evaluation import run_fwer_campaign
from mscpd.gaussian import GaussianTestConfig
from mscpd.simulation import add_noise, classify_energy, make_rng, make_signal
from mscpd.subgaussian import SubGaussianTestConfig


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _three_jump_fixture(seed=0):
    """Univariate series with three change-points at 10x the energy threshold."""
    n, taus = 400, [100, 200, 300]
    cfg = GaussianTestConfig(n, 1)
    unit, _ = make_signal(n, 1, taus, [[0.0], [1.0], [0.0], [1.0]])
    thr = [c.gaussian_threshold for c in classify_energy(unit, cfg).changepoints]
    h = max(math.sqrt(10 * t / r) for t, r in zip(thr, unit.r))
    _, theta = make_signal(n, 1, taus, [[0.0], [h], [0.0], [h]])
    return add_noise(theta, "gaussian", 1.0, rng=make_rng(seed, 0, 1)).data


class TestIO:
    def test_header_optional(self):
        a = mio.parse_series_csv("x1,x2\n1,2\n3,4\n")
        b = mio.parse_series_csv("1,2\n3,4\n")
        assert np.array_equal(a.data, b.data)
        assert a.data.shape == (2, 2)

    def test_ragged_row(self):
        with pytest.raises(DataError, match="line 4"):
            mio.parse_series_csv("a,b\n1,2\n3,4\n5\n6,7\n")

    def test_bad_cell(self):
        with pytest.raises(DataError, match="line 3.*'x'"):
            mio.parse_series_csv("1,2\n3,4\n5,x\n")
        with pytest.raises(DataError, match="non-finite"):
            mio.parse_series_csv("1,2\n3,nan\n")
        with pytest.raises(DataError):
            mio.parse_series_csv("1,2\n")

    def test_matrix_roundtrip(self, tmp_path):
        m = np.random.default_rng(0).normal(size=(3, 17)) * 1e3
        mio.write_matrix_csv(tmp_path / "m.csv", m)
        assert np.array_equal(mio.read_series_csv(tmp_path / "m.csv").data, m)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            mio.read_series_csv(tmp_path / "nope.csv")


class TestDetect:
    def test_constant(self, tmp_path, capsys):
        inp = _write(tmp_path / "c.csv", "\n".join(["1.5,2.5"] * 64) + "\n")
        out = tmp_path / "seg.json"
        assert main(["detect", "--input", inp, "--output", str(out)]) == 0
        assert json.loads(out.read_text())["K_hat"] == 0
        table = json.loads((tmp_path / "seg.calibration.json").read_text())
        assert table["n"] == 64 and table["p"] == 2
        assert "K_hat = 0" in capsys.readouterr().out

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_three_changepoints(self, tmp_path, seed):
        y = _three_jump_fixture(seed)
        mio.write_matrix_csv(tmp_path / "y.csv", y)
        out = tmp_path / "seg.json"
        assert main(["detect", "--input", str(tmp_path / "y.csv"), "--output", str(out)]) == 0
        seg = json.loads(out.read_text())
        assert seg["K_hat"] == 3
        assert [abs(c["tau"] - t) < 25 for c, t in zip(seg["changepoints"], [100, 200, 300])] == [True] * 3

    def test_ragged_exit_code(self, tmp_path, capsys):
        inp = _write(tmp_path / "r.csv", "1,2\n3,4\n5,6,7\n8,9\n")
        assert main(["detect", "--input", inp, "--output", str(tmp_path / "o.json")]) == 3
        assert "line 3" in capsys.readouterr().err

    @pytest.mark.parametrize("flags", [["--sigma", "0"], ["--sigma", "-1"], ["--delta", "1"],
                                       ["--delta", "0"], ["--L", "2"], ["--threads", "0"],
                                       ["--grid", "hexagonal"]])
    def test_config_errors(self, tmp_path, flags):
        inp = _write(tmp_path / "c.csv", "1,2\n3,4\n5,6\n7,8\n")
        assert main(["detect", "--input", inp, "--output", str(tmp_path / "o.json"), *flags]) == 2

    def test_missing_flags(self, tmp_path):
        assert main(["detect", "--output", str(tmp_path / "o.json")]) == 2

    def test_subgaussian_mode(self, tmp_path):
        inp = _write(tmp_path / "c.csv", "\n".join(["0,0,0"] * 40) + "\n")
        out = tmp_path / "o.json"
        assert main(["detect", "--input", inp, "--output", str(out), "--noise", "subgaussian",
                     "--L", "1.5"]) == 0
        table = json.loads((tmp_path / "o.calibration.json").read_text())
        assert table["kind"] == "subgaussian" and table["grid"] == "complete"

    def test_threads_identical_bytes(self, tmp_path):
        y = _three_jump_fixture(5)
        mio.write_matrix_csv(tmp_path / "y.csv", y)
        outs = []
        for t in ("1", "3"):
            o = tmp_path / f"o{t}.json"
            assert main(["detect", "--input", str(tmp_path / "y.csv"), "--output", str(o), "--threads", t]) == 0
            outs.append(o.read_bytes())
        assert outs[0] == outs[1]


def _scenario(tmp_path, **kw):
    sc = {"n": 64, "p": 3, "tau": [32], "mus": [[0, 0, 0], [3, 0, -3]], "seed": 7, **kw}
    return _write(tmp_path / "scenario.json", json.dumps(sc))


class TestSimulate:
    def test_deterministic(self, tmp_path):
        sc = _scenario(tmp_path)
        for d in ("a", "b"):
            assert main(["simulate", "--input", sc, "--output", str(tmp_path / d)]) == 0
        for f in ("Y.csv", "theta.csv", "truth.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert main(["simulate", "--input", sc, "--output", str(tmp_path / "c"), "--seed", "8"]) == 0
        assert (tmp_path / "a" / "Y.csv").read_bytes() != (tmp_path / "c" / "Y.csv").read_bytes()

    def test_constant_and_prior(self, tmp_path):
        sc = _write(tmp_path / "k0.json", json.dumps({"n": 32, "p": 2, "mus": [[1, 2]]}))
        assert main(["simulate", "--input", sc, "--output", str(tmp_path / "k0")]) == 0
        assert json.loads((tmp_path / "k0" / "truth.json").read_text())["tau"] == []
        pr = _write(tmp_path / "pr.json", json.dumps(
            {"n": 64, "p": 8, "prior": {"case": "single", "r": 8, "s": 2, "u": 0.1}}))
        assert main(["simulate", "--input", pr, "--output", str(tmp_path / "pr")]) == 0
        t = json.loads((tmp_path / "pr" / "truth.json").read_text())
        assert min(t["r_k"]) >= 8 and max(t["s_k"]) == 1

    def test_invalid_scenario(self, tmp_path):
        bad = _write(tmp_path / "bad.json", json.dumps({"n": 10, "p": 1}))
        assert main(["simulate", "--input", bad, "--output", str(tmp_path / "x")]) == 2
        broken = _write(tmp_path / "broken.json", "{")
        assert main(["simulate", "--input", broken, "--output", str(tmp_path / "x")]) == 2

    def test_roundtrip_into_detect(self, tmp_path):
        sc = _scenario(tmp_path, mus=[[0, 0, 0], [6, 0, -6]])
        assert main(["simulate", "--input", sc, "--output", str(tmp_path / "sim")]) == 0
        y = mio.read_series_csv(tmp_path / "sim" / "Y.csv")
        assert y.data.shape == (3, 64)
        out = tmp_path / "seg.json"
        assert main(["detect", "--input", str(tmp_path / "sim" / "Y.csv"), "--output", str(out)]) == 0
        seg = json.loads(out.read_text())
        assert seg["K_hat"] == 1 and abs(seg["changepoints"][0]["tau"] - 32) <= 4


class TestBench:
    def test_fwer(self, tmp_path, capsys):
        spec = _write(tmp_path / "c.json", json.dumps({"kind": "fwer", "n": 64, "p": 4, "runs": 10}))
        assert main(["bench", "--input", spec, "--output", str(tmp_path / "out" / "fwer")]) == 0
        d = json.loads((tmp_path / "out" / "fwer.json").read_text())
        assert d["runs"] == 10 and len(d["fwer_ci"]) == 2
        assert (tmp_path / "out" / "fwer.csv").read_text().startswith("run,")
        assert capsys.readouterr().out.startswith("fwer:")

    def test_power(self, tmp_path, capsys):
        spec = _write(tmp_path / "c.json", json.dumps(
            {"kind": "power", "n": 64, "p": 2, "runs": 4, "tau": [32], "mus": [[0, 0], [5, 0]]}))
        assert main(["bench", "--input", spec, "--output", str(tmp_path / "pw")]) == 0
        assert json.loads((tmp_path / "pw.json").read_text())["power"] == [1.0]

    @pytest.mark.parametrize("spec", [{"kind": "fwer"}, {"kind": "magic", "n": 8, "p": 1},
                                      {"kind": "fwer", "n": 64, "p": 2, "noise_model": "cauchy"},
                                      {"kind": "power", "n": 64, "p": 1}])
    def test_errors(self, tmp_path, spec):
        f = _write(tmp_path / "c.json", json.dumps(spec))
        assert main(["bench", "--input", f, "--output", str(tmp_path / "o")]) == 2


class TestCalibrate:
    def test_writes_constants(self, tmp_path):
        out = tmp_path / "consts.json"
        with pytest.warns(UserWarning):
            rc = main(["calibrate", "--output", str(out), "--n", "32", "--p", "2",
                       "--runs", "30", "--energy-runs", "5"])
        assert rc == 0
        d = json.loads(out.read_text())
        assert set(d) >= {"c_dense", "c_partial", "c0", "kappa_d", "kappa_s", "evidence"}
        assert d["c_dense"] == d["c_partial"] > 0
        # the constants file feeds back into detect
        inp = _write(tmp_path / "c.csv", "\n".join(["0,0"] * 32) + "\n")
        assert main(["detect", "--input", inp, "--output", str(tmp_path / "o.json"),
                     "--noise", "subgaussian", "--constants", str(out)]) == 0

    def test_rerun_verification(self):
        # fit on one set of seeds, check the null error on fresh seeds
        n, p, delta = 64, 4, 0.1
        res = calibrate_thresholds(n, p, delta=delta, runs=200, seed=1)
        c = res.constants["c_dense"]
        cfg = SubGaussianTestConfig(n, p, delta=delta, c_dense=c, c_partial=c)
        runs = 300
        rate = run_fwer_campaign(cfg, "gaussian", runs, seed=999).fwer_hat
        assert rate <= delta + 3 * math.sqrt(delta * (1 - delta) / runs)


def test_theorem1_small(tmp_path, capsys):
    out = tmp_path / "t1.json"
    assert main(["theorem1-suite", "--n-min", "6", "--n-max", "10", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True
    assert capsys.readouterr().out.startswith("PASS")


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "mscpd.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "detect" in out.stdout
