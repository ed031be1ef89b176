import json
from pathlib import Path

import pytest
import yaml

from wecpark.cli import main

from conftest import scenario_dict


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(scenario_dict()), encoding="utf-8")
    return path


class TestOptimizeCommand:
    def test_writes_artifacts_and_exits_zero(self, scenario_file, tmp_path):
        out = tmp_path / "run"
        code = main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(out)])
        assert code == 0
        assert (out / "history.csv").exists()
        assert (out / "device_map.csv").exists()
        assert (out / "summary.json").exists()
        assert (out / "timing.json").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["feasible"] is True
        # LF endings, no CR anywhere
        assert b"\r" not in (out / "history.csv").read_bytes()

    def test_byte_identical_reruns(self, scenario_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(a), "--seed", "9"]) == 0
        assert main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(b), "--seed", "9"]) == 0
        for name in ("history.csv", "device_map.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_missing_scenario_is_input_error(self, tmp_path):
        code = main(["optimize", "--scenario", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "o")])
        assert code == 3

    def test_invalid_scenario_is_input_error(self, tmp_path):
        bad = scenario_dict()
        bad["devices"][0]["draft_m"] = -2.0
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(bad))
        code = main(["optimize", "--scenario", str(path),
                     "--out", str(tmp_path / "o")])
        assert code == 3

    def test_infeasible_at_cap_exit_code(self, tmp_path):
        data = scenario_dict()
        # one outer iteration with a hopeless tolerance cannot terminate
        data["optimizer"]["penalty"].update({"tau_out": 1e-12, "max_outer": 1})
        data["optimizer"]["saa"]["max_iters"] = 5
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump(data))
        code = main(["optimize", "--scenario", str(path),
                     "--out", str(tmp_path / "o")])
        assert code == 2


class TestEvaluateCommand:
    def test_stdout_report(self, scenario_file, capsys):
        code = main(["evaluate", "--scenario", str(scenario_file),
                     "--damping", "8e4,8e4", "--stiffness", "0,0"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["expected_power_w"] > 0

    def test_matches_optimize_summary(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "run"
        main(["optimize", "--scenario", str(scenario_file), "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        c = ",".join(str(v) for v in summary["controls"]["damping_ns_m"])
        s = ",".join(str(v) for v in summary["controls"]["stiffness_n_m"])
        code = main(["evaluate", "--scenario", str(scenario_file),
                     "--damping", c, "--stiffness", s])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["expected_power_w"] == pytest.approx(
            summary["expected_power_w"], rel=1e-12)


class TestGridSearchCommand:
    def test_writes_grid(self, tmp_path):
        data = scenario_dict(devices=[scenario_dict()["devices"][0]])
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump(data))
        out = tmp_path / "grid"
        code = main(["grid-search", "--scenario", str(path), "--out", str(out),
                     "--c-min=1e4", "--c-max=2e5",
                     "--s-min=-1e5", "--s-max=1e5",
                     "--resolution", "8"])
        assert code == 0
        assert (out / "grid.csv").read_text().startswith("c,s,power,e_h,feasible")
        best = json.loads((out / "grid_summary.json").read_text())["best"]
        assert best["power_w"] > 0


class TestStudyCommand:
    def test_writes_study(self, scenario_file, tmp_path):
        out = tmp_path / "study"
        code = main(["convergence-study", "--scenario", str(scenario_file),
                     "--out", str(out), "--method", "saa-gl",
                     "--n-values", "2,4", "--n-ref", "8", "--tau-in", "1e-4"])
        assert code == 0
        assert (out / "study.csv").exists()
        summary = json.loads((out / "study_summary.json").read_text())
        assert summary["method"] == "saa-gl"


class TestServerMode:
    @pytest.fixture
    def http_backend(self, monkeypatch):
        # route the CLI's HTTP calls into an in-process service instance
        import httpx
        from fastapi.testclient import TestClient
        from wecpark.service.app import app

        client = TestClient(app)

        def fake_post(url, **kwargs):
            kwargs.pop("timeout", None)
            return client.post(url.replace("http://service", ""), **kwargs)

        monkeypatch.setattr(httpx, "post", fake_post)

    def test_server_flag_round_trip(self, scenario_file, tmp_path, http_backend):
        out = tmp_path / "run"
        code = main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(out), "--server", "http://service"])
        assert code == 0
        assert (out / "summary.json").exists()

    def test_server_artifacts_match_in_process(self, scenario_file, tmp_path,
                                               http_backend):
        remote, local = tmp_path / "remote", tmp_path / "local"
        assert main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(remote), "--server", "http://service"]) == 0
        assert main(["optimize", "--scenario", str(scenario_file),
                     "--out", str(local)]) == 0
        for name in ("history.csv", "device_map.csv", "summary.json"):
            assert (remote / name).read_bytes() == (local / name).read_bytes()
