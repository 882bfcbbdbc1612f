"""Python access to the mlharness scoring, ranking and environment core."""

import json as _json

from . import _core
from ._core import HarnessError, builtin_metrics, combined_reward, evaluate, human_rank

__all__ = [
    "Env",
    "HarnessError",
    "builtin_metrics",
    "combined_reward",
    "difficulty",
    "evaluate",
    "generate_fixture",
    "human_rank",
    "rank_tables",
    "report",
    "validate_layout",
]


def generate_fixture(parent, seed=7, metric="rmse"):
    """Write a synthetic competition under ``parent`` and describe it."""
    return _json.loads(_core.generate_fixture(str(parent), seed, metric))


def validate_layout(root):
    """List layout violations of a competition directory; empty when valid."""
    return _json.loads(_core.validate_layout(str(root)))


def rank_tables(scores_csv, seed=0, rounds=100, literal_aup=False):
    """AUP, H-Rank and Elo tables for a score matrix CSV (text, not path)."""
    return _json.loads(_core.rank_tables(scores_csv, seed, rounds, literal_aup))


def difficulty(csv_text):
    return _json.loads(_core.difficulty(csv_text))


def report(directory):
    return _json.loads(_core.report(str(directory)))


class Env:
    """One environment session over a competition directory.

    Actions are dicts shaped like ``{"action_type": "execute_code", "args": {"code": ...}}``.
    """

    def __init__(self, competition, workspace_dir, max_steps=15, time_limit=300.0, trajectory=""):
        self._env = _core.Env(str(competition), str(workspace_dir), max_steps, time_limit, str(trajectory))

    def step(self, action):
        return _json.loads(self._env.step(_json.dumps(action)))

    def reset(self):
        return _json.loads(self._env.reset())

    def trajectory(self):
        return _json.loads(self._env.trajectory())

    @property
    def step_count(self):
        return self._env.step_count

    @property
    def max_steps(self):
        return self._env.max_steps

    @property
    def done(self):
        return self._env.done

    @property
    def best_human_rank(self):
        return self._env.best_human_rank

    def close(self):
        self._env.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
