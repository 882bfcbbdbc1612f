import csv
import json
import math
import os
from pathlib import Path

import pytest

import mlharness

DATA_DIR = Path(os.environ.get("MLH_TEST_DATA_DIR", Path(__file__).resolve().parents[2] / "tests" / "data"))


def read_scores(path):
    with open(path, newline="") as f:
        return [float(r["score"]) for r in csv.DictReader(f)]


def test_human_rank_counts_strictly_better_entries():
    assert mlharness.human_rank(5.0, [1, 2, 3, 4, 10]) == 0.8
    assert mlharness.human_rank(0.5, [0.1, 0.5, 0.9], "lower_better") == pytest.approx(1 / 3)
    assert mlharness.human_rank(1.0, [1.0, 1.0]) == 0.0
    for n in range(1, 21):
        for p in range(n + 1):
            board = [2.0] * p + [0.0] * (n - p)
            assert mlharness.human_rank(1.0, board) == (n - p) / n


def test_combined_reward():
    assert mlharness.combined_reward(5.0, [1, 2, 3, 4, 10], [1, 2, 3, 8, 10]) == 0.7
    assert mlharness.combined_reward(5.0, [1, 2, 3, 4, 10], None) == 0.8


def test_unknown_direction_raises():
    with pytest.raises(mlharness.HarnessError) as err:
        mlharness.human_rank(1.0, [1.0], "sideways")
    assert err.value.code == "InvalidArgument"


def test_fixture_evaluate_and_validate(tmp_path):
    info = mlharness.generate_fixture(tmp_path, seed=7)
    root = Path(info["root"])
    assert info["slug"] == "synthetic-rmse-7"
    assert mlharness.validate_layout(root) == []

    prediction = tmp_path / "pred.csv"
    with open(root / "data/public/test.csv", newline="") as f, open(prediction, "w") as out:
        out.write("id,target\n")
        rows = list(csv.DictReader(f))
        for r in rows:
            out.write(f"{r['id']},{3 * float(r['x1']) - 2 * float(r['x2'])!r}\n")
    with open(root / "data/private/test_answer.csv", newline="") as f:
        truth = {r["id"]: float(r["target"]) for r in csv.DictReader(f)}
    expected = math.sqrt(sum((3 * float(r["x1"]) - 2 * float(r["x2"]) - truth[r["id"]]) ** 2 for r in rows) / len(rows))
    assert mlharness.evaluate(root, prediction) == pytest.approx(expected, abs=1e-12)

    (root / "data/private/test_answer.csv").unlink()
    kinds = {(v["path"], v["kind"]) for v in mlharness.validate_layout(root)}
    assert ("data/private/test_answer.csv", "Missing") in kinds


def test_env_episode_matches_leaderboards(tmp_path):
    info = mlharness.generate_fixture(tmp_path / "registry", seed=7)
    root = Path(info["root"])
    with mlharness.Env(root, tmp_path / "work", max_steps=3, time_limit=60) as env:
        first = env.step({"action_type": "request_info", "args": {}})
        assert first["reward"] is None and not first["done"]
        result = env.step({"action_type": "execute_code", "args": {"code": info["solution_code"]}})
        score = info["reference_score"]
        public = read_scores(root / "data/private/public_leaderboard.csv")
        private = read_scores(root / "data/private/private_leaderboard.csv")
        expected = (sum(s > score for s in public) / len(public) + sum(s > score for s in private) / len(private)) / 2
        assert result["reward"] == expected
        assert env.best_human_rank == expected
        last = env.step({"action_type": "get_history", "args": {"last_n": 2}})
        assert last["done"]
        with pytest.raises(mlharness.HarnessError):
            env.step({"action_type": "request_info", "args": {}})
        steps = [r["action"]["action_type"] for r in env.trajectory()]
        assert steps == ["request_info", "execute_code", "get_history"]
        assert "test_answer" not in json.dumps(env.trajectory())


def test_rank_tables_dominance():
    rows = ["task,model,score,direction,feasible,human_rank,category"]
    for t, (a, b) in enumerate([(0.9, 0.5), (0.8, 0.7), (0.6, 0.2)]):
        rows.append(f"t{t},A,{a},higher_better,1,,Tabular")
        rows.append(f"t{t},B,{b},higher_better,1,,Tabular")
    first = mlharness.rank_tables("\n".join(rows) + "\n", seed=3, rounds=20)
    second = mlharness.rank_tables("\n".join(rows) + "\n", seed=3, rounds=20)
    assert first == second
    rows = {line.split(" | ")[0]: line.split(" | ") for line in first["text"].splitlines() if line[:4] in ("A | ", "B | ")}
    # A is best everywhere, so its profile is 1 over the whole range [0, log10(3)].
    assert float(rows["A"][1]) == pytest.approx(math.log10(3), abs=1e-3)
    assert float(rows["A"][1]) > float(rows["B"][1])
    assert int(rows["A"][3]) > int(rows["B"][3])


def test_difficulty_endpoints():
    rows = mlharness.difficulty((DATA_DIR / "difficulty_table.csv").read_text())
    assert rows[0]["task"] == "tabular-playground-series-dec-2021"
    assert rows[0]["avg_human_rank"] == pytest.approx(1.0)
    assert rows[-1]["task"] == "santander-customer-transaction-prediction"
    assert rows[-1]["avg_human_rank"] == pytest.approx(0.0)


def test_builtin_metric_names():
    names = mlharness.builtin_metrics()
    assert {"rmse", "roc_auc", "log_loss", "map_at_k"} <= set(names)


def test_imported_from_stage_when_requested():
    stage = os.environ.get("MLH_PYTHON_STAGE_DIR")
    if stage:
        assert Path(mlharness._core.__file__).resolve().parent == (Path(stage) / "mlharness").resolve()
