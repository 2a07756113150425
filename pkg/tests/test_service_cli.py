"""Service endpoints and the thin CLI client."""

import os
import time

import numpy as np
import pytest

from fastapi.testclient import TestClient

from smaug.cli import main as cli_main
from smaug.service import create_app

TINY_RUN = {
    "preset": "matrix-game",
    "overrides": {
        "run.total_env_steps": "400",
        "run.eval_interval": "200",
        "run.eval_episodes": "4",
        "train.rnn_hidden": "8",
        "train.batch_size": "8",
        "train.n_parallel_envs": "4",
        "run.seeds": "0",
    },
}


@pytest.fixture()
def client():
    return TestClient(create_app())


def wait_finished(client, run_id, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/runs/{run_id}").json()
        if status["state"] in ("finished", "failed"):
            return status
        time.sleep(0.1)
    raise TimeoutError("run did not finish")


class TestService:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_run_lifecycle_and_metrics(self, client, tmp_path):
        req = dict(TINY_RUN)
        req["overrides"] = dict(TINY_RUN["overrides"],
                                **{"run.out_dir": str(tmp_path), "run.id": "t1"})
        created = client.post("/runs", json=req)
        assert created.status_code == 200
        run_id = created.json()["run_id"]
        status = wait_finished(client, run_id)
        assert status["state"] == "finished"
        assert status["seeds_done"] == 1
        assert status["mean_final_return"] is not None
        metrics = client.get(f"/runs/{run_id}/metrics", params={"seed": 0})
        assert metrics.status_code == 200
        header = metrics.text.splitlines()[0]
        assert header.startswith("step,episodes,td_loss,inference_loss,"
                                 "variational_loss,mean_r_mi,mean_r_f,"
                                 "eval_return,eval_success_rate,eval_std,epsilon")
        listing = client.get("/runs").json()
        assert any(item["run_id"] == run_id for item in listing)

    def test_bad_config_is_400_with_field(self, client):
        response = client.post("/runs", json={"overrides": {"train.lr": "0.1"}})
        assert response.status_code == 400
        assert "env.name" in response.json()["detail"]

    def test_unknown_run_404(self, client):
        assert client.get("/runs/nope").status_code == 404
        assert client.get("/runs/nope/metrics").status_code == 404

    def test_eval_and_diagnose_endpoints(self, client, tmp_path):
        req = dict(TINY_RUN)
        req["overrides"] = dict(TINY_RUN["overrides"],
                                **{"run.out_dir": str(tmp_path), "run.id": "t2"})
        run_id = client.post("/runs", json=req).json()["run_id"]
        wait_finished(client, run_id)
        ckpt = str(tmp_path / "t2" / "seed0" / "checkpoint.ckpt")
        assert os.path.exists(ckpt)
        config_text = open(tmp_path / "t2" / "config.txt").read()
        ev = client.post("/eval", json={"checkpoint": ckpt, "episodes": 4,
                                        "config_text": config_text})
        assert ev.status_code == 200
        assert np.isfinite(ev.json()["mean_return"])
        diag = client.post("/diagnose", json={"checkpoint": ckpt, "episodes": 2,
                                              "config_text": config_text})
        assert diag.status_code == 200
        body = diag.json()
        assert os.path.exists(body["csv_path"])
        header = open(body["csv_path"]).read().splitlines()[0].split(",")
        assert header[:3] == ["t", "agent", "goal_id"]
        assert "alpha_1" in header and "z_0" in header

    def test_eval_shape_mismatch_descriptive(self, client, tmp_path):
        req = dict(TINY_RUN)
        req["overrides"] = dict(TINY_RUN["overrides"],
                                **{"run.out_dir": str(tmp_path), "run.id": "t3"})
        run_id = client.post("/runs", json=req).json()["run_id"]
        wait_finished(client, run_id)
        ckpt = str(tmp_path / "t3" / "seed0" / "checkpoint.ckpt")
        # evaluating with mismatched net sizes must fail descriptively
        response = client.post("/eval", json={
            "checkpoint": ckpt, "episodes": 2, "preset": "matrix-game",
            "overrides": {"train.rnn_hidden": "16"},
        })
        assert response.status_code == 400
        assert "does not match" in response.json()["detail"]

    def test_gradcheck_endpoint(self, client):
        response = client.post("/gradcheck", json={"tolerance": 1e-3})
        body = response.json()
        assert body["passed"] is True
        names = {r["network"] for r in body["reports"]}
        assert {"segment_gru", "trajectory_gru", "attention_fusion",
                "agent_q_head", "variational_nets", "inference_net",
                "mixing_hypernets"} <= names


class TestCli:
    def test_train_and_summary(self, tmp_path, capsys):
        code = cli_main([
            "train", "--preset", "matrix-game", "--seed", "0,1",
            "--out", str(tmp_path),
            "--set", "run.id=cli1", "--set", "run.total_env_steps=250",
            "--set", "run.eval_interval=200", "--set", "run.eval_episodes=2",
            "--set", "train.rnn_hidden=8", "--set", "train.batch_size=8",
            "--set", "train.n_parallel_envs=4",
            "--poll-interval", "0.05",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "final return over 2 seed(s)" in out
        summary = open(tmp_path / "cli1" / "summary.csv").read().splitlines()
        seeds = [line.split(",")[0] for line in summary[1:]]
        assert seeds[:2] == ["0", "1"]
        # mean/std computed over exactly the two final returns
        import numpy as np
        finals = [float(line.split(",")[1]) for line in summary[1:3]]
        mean_line = [line for line in summary if line.startswith("mean,")][0]
        std_line = [line for line in summary if line.startswith("std,")][0]
        assert float(mean_line.split(",")[1]) == pytest.approx(np.mean(finals), abs=1e-9)
        assert float(std_line.split(",")[1]) == pytest.approx(np.std(finals), abs=1e-9)

    def test_missing_env_name_exits_2(self, capsys):
        code = cli_main(["train", "--set", "train.lr=0.001"])
        assert code == 2
        assert "env.name" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, capsys):
        code = cli_main(["train", "--config", "/nonexistent/path.cfg"])
        assert code == 2

    def test_gradcheck_command(self, capsys):
        code = cli_main(["gradcheck"])
        out = capsys.readouterr().out
        assert code == 0
        assert "overall: pass" in out

    def test_eval_requires_discoverable_config(self, tmp_path, capsys):
        ckpt = tmp_path / "orphan.ckpt"
        ckpt.write_bytes(b"SMAUGCKPT")
        code = cli_main(["eval", "--checkpoint", str(ckpt), "--episodes", "1"])
        assert code == 2
        assert "config" in capsys.readouterr().err
