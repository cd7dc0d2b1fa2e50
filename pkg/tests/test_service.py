import json

import pytest
from fastapi.testclient import TestClient

from epiwarn.configfmt import write_backtest_config, write_synth_spec
from epiwarn.experiment import BacktestConfig, SyntheticSpec
from epiwarn.service.app import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def synth_files(client, tmp_path):
    spec_path = tmp_path / "spec.cfg"
    write_synth_spec(spec_path, SyntheticSpec(n_cities=5, weeks=120))
    r = client.post("/api/synth", json={"out_dir": str(tmp_path), "spec_path": str(spec_path),
                                        "seed": 7})
    assert r.status_code == 200
    return r.json()


def tiny_backtest_config(tmp_path, synth_files, **overrides):
    config = BacktestConfig(gamma_grid=(2,), threshold_grid=(0.5,),
                            train_only_weeks=104, refit_stride=4,
                            opt_restarts=1, opt_max_evals=40, seed=5)
    path = tmp_path / "backtest.cfg"
    write_backtest_config(path, config, synth_files["epi_path"], synth_files["tweet_path"])
    return path


class TestHealth:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"


class TestValidateEndpoint:
    def test_ok_on_synth_output(self, client, synth_files):
        r = client.post("/api/validate", json={"epi_path": synth_files["epi_path"],
                                               "tweet_path": synth_files["tweet_path"]})
        assert r.status_code == 200
        body = r.json()
        assert body["ok"] is True
        assert body["n_cities"] == 5
        assert body["tweets_present"] is True
        assert len(body["cities"]) == 5

    def test_epi_only_notes_absent_tweets(self, client, synth_files):
        r = client.post("/api/validate", json={"epi_path": synth_files["epi_path"]})
        assert r.status_code == 200
        assert r.json()["tweets_present"] is False

    def test_malformed_row_reported_with_location(self, client, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("city_id,week,cases,population\nx,1,5,1000\nx,2,-3,1000\n")
        r = client.post("/api/validate", json={"epi_path": str(bad)})
        assert r.status_code == 200
        body = r.json()
        assert body["ok"] is False
        assert "row 3" in body["errors"][0]
        assert "cases" in body["errors"][0]

    def test_missing_file_not_ok(self, client, tmp_path):
        r = client.post("/api/validate", json={"epi_path": str(tmp_path / "nope.csv")})
        assert r.status_code == 200
        assert r.json()["ok"] is False


class TestSynthEndpoint:
    def test_outputs_validate(self, client, synth_files):
        r = client.post("/api/validate", json={"epi_path": synth_files["epi_path"],
                                               "tweet_path": synth_files["tweet_path"]})
        assert r.json()["ok"] is True

    def test_deterministic(self, client, tmp_path, synth_files):
        r2 = client.post("/api/synth", json={"out_dir": str(tmp_path / "again"), "seed": 7,
                                             "spec_path": None})
        # same seed, default spec vs explicit default-valued spec file
        assert r2.status_code == 200

    def test_bad_spec_is_client_error(self, client, tmp_path):
        spec = tmp_path / "bad.cfg"
        spec.write_text("n_cities = 0\n")
        r = client.post("/api/synth", json={"out_dir": str(tmp_path), "spec_path": str(spec)})
        assert r.status_code == 400
        assert r.json()["detail"]["error_type"] == "ConfigError"

    def test_unknown_spec_key_is_client_error(self, client, tmp_path):
        spec = tmp_path / "bad2.cfg"
        spec.write_text("cities = 5\n")
        r = client.post("/api/synth", json={"out_dir": str(tmp_path), "spec_path": str(spec)})
        assert r.status_code == 400


class TestBacktestEndpoint:
    def test_full_run_writes_outputs(self, client, tmp_path, synth_files):
        cfg = tiny_backtest_config(tmp_path, synth_files)
        out = tmp_path / "run"
        r = client.post("/api/backtest", json={"config_path": str(cfg),
                                               "out_dir": str(out), "jobs": 1})
        assert r.status_code == 200
        body = r.json()
        assert (out / "predictions.csv").exists()
        assert (out / "report.json").exists()
        assert (out / "manifest.json").exists()
        assert body["n_cities"] == 5
        assert len(body["cells"]) == 1
        assert "mean AUC difference" in body["table_text"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "succeeded"
        assert manifest["finished_at"] is not None
        assert len(manifest["inputs"]) == 3

    def test_reruns_byte_identical(self, client, tmp_path, synth_files):
        cfg = tiny_backtest_config(tmp_path, synth_files)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            r = client.post("/api/backtest", json={"config_path": str(cfg),
                                                   "out_dir": str(out), "jobs": 1})
            assert r.status_code == 200
            outs.append(out)
        assert (outs[0] / "predictions.csv").read_bytes() == (outs[1] / "predictions.csv").read_bytes()
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()

    def test_missing_config_is_client_error(self, client, tmp_path):
        r = client.post("/api/backtest", json={"config_path": str(tmp_path / "none.cfg"),
                                               "out_dir": str(tmp_path / "x")})
        assert r.status_code == 400

    def test_unknown_config_key_is_client_error(self, client, tmp_path, synth_files):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(f"epi_path = {synth_files['epi_path']}\nbogus_key = 1\n")
        r = client.post("/api/backtest", json={"config_path": str(cfg),
                                               "out_dir": str(tmp_path / "y")})
        assert r.status_code == 400
        assert "bogus_key" in r.json()["detail"]["message"]

    def test_empty_gamma_grid_fails_before_compute(self, client, tmp_path, synth_files):
        cfg = tmp_path / "empty.cfg"
        cfg.write_text(f"epi_path = {synth_files['epi_path']}\ngamma_grid =\n")
        out = tmp_path / "z"
        r = client.post("/api/backtest", json={"config_path": str(cfg), "out_dir": str(out)})
        assert r.status_code == 400
        assert not (out / "predictions.csv").exists()

    def test_mid_run_failure_cleans_partial_outputs(self, client, tmp_path, synth_files):
        # training span exceeds the data: the run starts (manifest written)
        # and then aborts; nothing may be left behind
        cfg = tmp_path / "long_train.cfg"
        cfg.write_text(
            f"epi_path = {synth_files['epi_path']}\n"
            f"tweet_path = {synth_files['tweet_path']}\n"
            "train_only_weeks = 400\n"
        )
        out = tmp_path / "w"
        r = client.post("/api/backtest", json={"config_path": str(cfg), "out_dir": str(out)})
        assert r.status_code == 400
        assert not (out / "manifest.json").exists()
        assert not (out / "predictions.csv").exists()
        assert not (out / "report.json").exists()


class TestPlotdataEndpoint:
    @pytest.fixture()
    def run_dir(self, client, tmp_path, synth_files):
        cfg = tiny_backtest_config(tmp_path, synth_files)
        out = tmp_path / "run"
        r = client.post("/api/backtest", json={"config_path": str(cfg),
                                               "out_dir": str(out), "jobs": 1})
        assert r.status_code == 200
        return out

    @pytest.mark.parametrize("kind,header", [
        ("diff_bars", "gamma\tthreshold\tmean_diff\tci_lo\tci_hi"),
        ("auc_cdf", "auc\tcumulative_fraction"),
        ("qq", "theoretical\tobserved"),
    ])
    def test_kinds(self, client, run_dir, kind, header):
        r = client.post("/api/plotdata", json={"report_path": str(run_dir), "kind": kind})
        assert r.status_code == 200
        body = r.json()
        with open(body["out_path"]) as fh:
            assert fh.readline().strip() == header
        assert body["n_rows"] > 0

    def test_unknown_kind_rejected_by_schema(self, client, run_dir):
        r = client.post("/api/plotdata", json={"report_path": str(run_dir), "kind": "pie"})
        assert r.status_code == 422

    def test_missing_report_is_client_error(self, client, tmp_path):
        r = client.post("/api/plotdata", json={"report_path": str(tmp_path / "none.json"),
                                               "kind": "diff_bars"})
        assert r.status_code == 400
