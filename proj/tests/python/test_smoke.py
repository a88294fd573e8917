import math
import os
import subprocess

import pytest

import haven


def test_defaults_and_ini_round_trip():
    c = haven.TrainConfig()
    assert c.lr == 0.0005
    assert c.batch_size == 32
    assert c.k == 3
    assert c.n_macro_actions == 8
    assert c.algo == "haven-qmix"
    again = haven.parse_config(c.to_ini())
    assert again.to_ini() == c.to_ini()
    assert "lr = 0.0005" in c.to_ini().splitlines()


def test_algo_mapping_and_bad_names():
    c = haven.TrainConfig()
    for name in haven.algo_names():
        c.algo = name
        assert c.algo == name
    with pytest.raises(ValueError):
        c.algo = "coma"
    with pytest.raises(ValueError):
        haven.parse_config("[train]\nlearning_rate = 1\n")


def test_reward_arithmetic():
    assert haven.high_level_reward([1.0, 0.0, 2.0]) == 3.0
    assert haven.advantage(2.0, 1.0, 1.0, False, 0.99) == pytest.approx(1.99, abs=1e-12)
    assert haven.intrinsic_rewards(1.99, 3, 3) == pytest.approx([1.99 / 3] * 3, abs=1e-12)
    assert haven.monotonic_coefficient(0.99, 3) == pytest.approx(1.990033, abs=5e-7)
    assert haven.nearest_rank_percentile([0.1, 0.2, 0.3, 0.4, 0.5], 50) == 0.3


def test_environment_step():
    env = haven.make_environment("chain")
    assert env.spec.n_agents == 1
    env.reset(0)
    for _ in range(2):
        r = env.step([1])
        assert r["reward"] == 0.0
    r = env.step([1])
    assert r["reward"] == 1.0
    assert r["terminated"]
    assert env.done
    with pytest.raises(ValueError):
        haven.make_environment("starcraft")


def test_short_training_run(tmp_path):
    rows = haven.train(tmp_path / "run", algo="haven-vdn", env="climb-po", total_env_steps=60,
                       batch_size=4, eval_interval=30, eval_episodes=2, hidden_dim=8)
    assert rows[-1].env_step >= 60
    assert [r.env_step for r in rows] == sorted({r.env_step for r in rows})
    assert (tmp_path / "run" / "metrics.csv").exists()
    back = haven.read_metrics_csv(str(tmp_path / "run" / "metrics.csv"))
    assert len(back) == len(rows)
    assert math.isnan(back[0].loss_v)


CLI = os.environ.get("HAVEN_CLI")


@pytest.mark.skipif(not CLI, reason="HAVEN_CLI not set")
def test_cli_exit_codes(tmp_path):
    ok = subprocess.run([CLI, "train", "--env", "climb-po", "--total-steps", "40",
                         "--out", str(tmp_path / "ok")], capture_output=True)
    assert ok.returncode == 0
    usage = subprocess.run([CLI, "train", "--algo", "coma", "--out", str(tmp_path / "bad")],
                           capture_output=True)
    assert usage.returncode == 1
    blocker = tmp_path / "file"
    blocker.write_text("x")
    io = subprocess.run([CLI, "train", "--env", "climb-po", "--total-steps", "40",
                         "--out", str(blocker / "sub")], capture_output=True)
    assert io.returncode == 2
