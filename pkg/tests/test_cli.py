import json
from importlib.resources import files

import numpy as np
import pytest

from blin.cli import main
from blin.exchangeable import gaussian_fourth_moments

EXAMPLE = str(files("blin") / "data" / "exam_example.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def write_csv(path, rows, header=None):
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(x)) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def spec2(tmp_path):
    ev = [[2.0, 0.5], [0.5, 1.0]]
    vp = (0.5 * np.eye(3) + 0.1).tolist()
    return write_json(
        tmp_path / "spec.json",
        {"r": 2, "e_v_override": ev, "gaussian": {"v_prime": vp}, "n": 12, "s": [[2.5, 0.2], [0.2, 1.4]]},
    )


class TestSampleCov:
    def test_two_rows(self, tmp_path, capsys):
        data = write_csv(tmp_path / "d.csv", [[0, 0], [2, 2]])
        code, out, _ = run(capsys, "sample-cov", "--data", data, "--format", "json")
        assert code == 0
        assert json.loads(out) == {"n": 2, "r": 2, "sample_covariance": [[2.0, 2.0], [2.0, 2.0]]}

    def test_thirty_four_cases(self, tmp_path, capsys):
        rows = np.random.default_rng(0).normal(size=(34, 3))
        data = write_csv(tmp_path / "d.csv", rows, header=["A", "E", "C"])
        code, out, _ = run(capsys, "sample-cov", "--data", data)
        assert code == 0
        assert "n = 34, r = 3" in out
        code, out, _ = run(capsys, "sample-cov", "--data", data, "--format", "json")
        assert np.asarray(json.loads(out)["sample_covariance"]).shape == (3, 3)

    def test_one_row(self, tmp_path, capsys):
        data = write_csv(tmp_path / "d.csv", [[1, 2]])
        assert run(capsys, "sample-cov", "--data", data)[0] == 3

    def test_malformed(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4,5\n")
        code, _, err = run(capsys, "sample-cov", "--data", str(p))
        assert code == 2 and "d.csv:2" in err

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "sample-cov", "--data", str(tmp_path / "none.csv"))[0] == 2


class TestNormalSpec:
    def test_scalar(self, tmp_path, capsys):
        ev = write_json(tmp_path / "ev.json", [[3.0]])
        code, out, _ = run(capsys, "normal-spec", "--ev", ev, "--format", "json")
        assert code == 0 and json.loads(out)["u"] == [[18.0]]

    def test_monte_carlo_seed(self, tmp_path, capsys, monkeypatch):
        ev = write_json(tmp_path / "ev.json", [[1.0, 0.5], [0.5, 1.0]])
        args = ("normal-spec", "--ev", ev, "--format", "json", "--mc-draws", "20000", "--seed", "4")
        doc = json.loads(run(capsys, *args)[1])
        np.testing.assert_array_equal(doc["u"], gaussian_fourth_moments([[1.0, 0.5], [0.5, 1.0]]))
        assert doc["monte_carlo"]["seed"] == 4
        monkeypatch.setenv("BLIN_SEED", "9")
        doc2 = json.loads(run(capsys, *args)[1])
        assert doc2["monte_carlo"]["seed"] == 9
        assert doc2["monte_carlo"]["estimate"] != doc["monte_carlo"]["estimate"]

    def test_vprime_csv(self, tmp_path, capsys):
        ev = write_csv(tmp_path / "ev.csv", [[1.0]])
        vp = write_csv(tmp_path / "vp.csv", [[0.25]])
        code, out, _ = run(capsys, "normal-spec", "--ev", ev, "--vprime", vp)
        assert code == 0 and "2.2500" in out


class TestAdjust:
    def test_three_collections_nested(self, spec2, capsys):
        code, out, _ = run(capsys, "adjust", "--spec", spec2, "--format", "json")
        assert code == 0
        adj = json.loads(out)["adjustments"]
        assert [a["collection"] for a in adj] == ["D_S", "D_I", "D_C"]
        res = [a["resolution"] for a in adj]
        assert res[0] <= res[1] + 1e-12 and res[1] <= res[2] + 1e-12
        for a in adj:
            m = np.array(a["matrix"])
            assert np.array_equal(m, m.T)

    def test_no_residual_variation(self, tmp_path, capsys):
        s = [[2.5, 0.2], [0.2, 1.4]]
        spec = write_json(
            tmp_path / "s.json",
            {"r": 2, "e_v_override": [[2.0, 0.5], [0.5, 1.0]], "v": np.eye(3).tolist(), "v_prime": np.eye(3).tolist(), "n": 5, "s": s},
        )
        code, out, _ = run(capsys, "adjust", "--spec", spec, "--format", "json")
        assert code == 0
        for a in json.loads(out)["adjustments"]:
            np.testing.assert_allclose(a["matrix"], s, rtol=1e-12)

    def test_data_overrides(self, spec2, tmp_path, capsys):
        data = write_csv(tmp_path / "d.csv", [[0, 0], [1, 2], [2, 1], [3, 3]])
        code, out, _ = run(capsys, "adjust", "--spec", spec2, "--data", data, "--format", "json", "--collections", "s")
        doc = json.loads(out)
        assert code == 0 and doc["n"] == 4 and len(doc["adjustments"]) == 1
        code, out, _ = run(capsys, "adjust", "--spec", spec2, "--n", "100", "--format", "json")
        assert json.loads(out)["n"] == 100

    def test_bundled_example(self, capsys):
        code, out, _ = run(capsys, "adjust", "--spec", EXAMPLE, "--format", "json")
        assert code == 0
        for a in json.loads(out)["adjustments"]:
            assert np.asarray(a["matrix"]).shape == (3, 3)
            assert not a["eigen"]["flagged"]

    def test_invalid_spec_lists_all(self, tmp_path, capsys):
        spec = write_json(tmp_path / "s.json", {"r": 2, "extra": 1, "c": [[1, 2], [3, 4]], "c_prime": [[0, 0], [0, 0]], "v": [[1]]})
        code, _, err = run(capsys, "adjust", "--spec", spec)
        assert code == 4
        assert "extra" in err and "'v'" in err

    def test_symmetry_violation_exit4(self, tmp_path, capsys):
        spec = write_json(
            tmp_path / "s.json",
            {"r": 1, "c": [[2.0]], "c_prime": [[1.0]], "v": [[1.0]], "v_prime": [[0.5]], "n": 3},
        )
        assert run(capsys, "adjust", "--spec", spec)[0] == 4  # no S given
        spec = write_json(
            tmp_path / "s2.json",
            {"r": 2, "e_v_override": [[1, 0.5], [0.4, 1]], "v": np.eye(3).tolist(), "v_prime": np.zeros((3, 3)).tolist(), "n": 3, "s": np.eye(2).tolist()},
        )
        code, _, err = run(capsys, "adjust", "--spec", spec)
        assert code == 4 and "not symmetric" in err

    def test_bad_tolerance(self, spec2, capsys):
        assert run(capsys, "adjust", "--spec", spec2, "--tol", "psd=-1")[0] == 4
        assert run(capsys, "adjust", "--spec", spec2, "--tol", "nope=1")[0] == 4
        assert run(capsys, "adjust", "--spec", spec2, "--tol", "pinv=1e-9")[0] == 0

    def test_insufficient_n(self, spec2, capsys):
        assert run(capsys, "adjust", "--spec", spec2, "--n", "1")[0] == 3


class TestResolve:
    def test_steps(self, spec2, capsys):
        code, out, _ = run(capsys, "resolve", "--spec", spec2, "--format", "json")
        steps = json.loads(out)["steps"]
        assert code == 0 and [s["collections"] for s in steps][-1] == ["D_S", "D_I", "D_C"]
        assert all(s["increment_V"] >= -1e-12 for s in steps)
        code, out, _ = run(capsys, "resolve", "--spec", spec2)
        assert "D_S + D_I + D_C" in out


class TestDiagnose:
    def test_observation_at_prior(self, tmp_path, capsys):
        ev = [[2.0, 0.5], [0.5, 1.0]]
        spec = write_json(
            tmp_path / "s.json",
            {"r": 2, "e_v_override": ev, "gaussian": {"v_prime": np.eye(3).tolist()}, "n": 10, "s": ev},
        )
        code, out, _ = run(capsys, "diagnose", "--spec", spec, "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert all(s["bearing"]["size_ratio"] == 0.0 for s in doc["stepwise"])
        assert all(b["size_ratio"] == 0.0 for b in doc["collection_bearings"].values())

    def test_single_quantity_ratio(self, tmp_path, capsys):
        ev, var_v, u, n, s = 2.0, 0.3, 1.2, 6, 3.4
        spec = write_json(
            tmp_path / "s.json",
            {"r": 1, "e_v_override": [[ev]], "v": [[var_v + u]], "v_prime": [[var_v]], "n": n, "s": [[s]]},
        )
        code, out, _ = run(capsys, "diagnose", "--spec", spec, "--format", "json")
        doc = json.loads(out)
        var_s = var_v + u / n
        assert doc["stepwise"][0]["bearing"]["size_ratio"] == pytest.approx((s - ev) ** 2 / var_s, rel=1e-12)

    def test_strict_indefinite(self, tmp_path, capsys):
        s = [[1.0, 2.0], [2.0, 1.0]]
        doc = {"r": 2, "e_v_override": np.eye(2).tolist(), "v": np.eye(3).tolist(), "v_prime": np.eye(3).tolist(), "n": 4, "s": s}
        spec = write_json(tmp_path / "s.json", doc)
        code, out, _ = run(capsys, "diagnose", "--spec", spec)
        assert code == 0 and "WARNING" in out
        code, _, err = run(capsys, "diagnose", "--spec", spec, "--strict")
        assert code == 5 and "negative eigenvalues" in err

    def test_g_ref(self, spec2, tmp_path, capsys):
        g = write_json(tmp_path / "g.json", np.eye(2).tolist())
        code, out, _ = run(capsys, "diagnose", "--spec", spec2, "--g-ref", g, "--format", "json")
        assert code == 0 and json.loads(out)["g_ref"] == np.eye(2).tolist()

    def test_text_report(self, capsys):
        code, out, _ = run(capsys, "diagnose", "--spec", EXAMPLE)
        assert code == 0 and "bearing size" in out and "E_D_C(V)" in out


class TestDiagram:
    def test_default_nodes(self, spec2, tmp_path, capsys):
        out_path = tmp_path / "g.dot"
        assert run(capsys, "diagram", "--spec", spec2, "--out", str(out_path))[0] == 0
        text = out_path.read_text()
        for node in ("V", "V_I", "D_S", "D_I", "D_C"):
            assert f'"{node}" [' in text

    def test_from_report(self, spec2, tmp_path, capsys):
        report = tmp_path / "r.json"
        run(capsys, "diagnose", "--spec", spec2, "--format", "json", "--out", str(report))
        code, out, _ = run(capsys, "diagram", "--report", str(report))
        code2, out2, _ = run(capsys, "diagram", "--spec", spec2)
        assert code == code2 == 0 and out == out2

    def test_empty_choice(self, spec2, capsys):
        assert run(capsys, "diagram", "--spec", spec2, "--collections", "")[0] == 4

    def test_missing_upstream(self, capsys):
        assert run(capsys, "diagram")[0] == 4

    def test_report_without_steps(self, tmp_path, capsys):
        report = write_json(tmp_path / "r.json", {"adjustments": []})
        assert run(capsys, "diagram", "--report", report)[0] == 4

    def test_configured_arcs(self, tmp_path, capsys):
        doc = json.loads(open(EXAMPLE).read())
        doc["diagram_arcs"] = [["D_S", "D_I"], ["D_I", "D_C", True]]
        spec = write_json(tmp_path / "s.json", doc)
        code, out, _ = run(capsys, "diagram", "--spec", spec)
        assert code == 0 and out.count("->") == 2 and "dir=back" in out


def test_deterministic_outputs(spec2, tmp_path, capsys):
    outputs = []
    for k in range(2):
        dot = tmp_path / f"g{k}.dot"
        rep = tmp_path / f"r{k}.json"
        run(capsys, "diagnose", "--spec", spec2, "--format", "json", "--out", str(rep))
        run(capsys, "diagram", "--spec", spec2, "--out", str(dot))
        outputs.append((rep.read_bytes(), dot.read_bytes()))
    assert outputs[0] == outputs[1]
