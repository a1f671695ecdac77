"""Scénarios statistiques longs (`pytest --runslow`)."""
import os

import numpy as np
import pandas as pd
import pytest

from main import cli_main
from reports import build_comparison_summary, emit_ranking_report
from services.experiment_service import ALL_MODES, AlgorithmMode, ExperimentConfig, ExperimentService

N_SEEDS = 10

pytestmark = pytest.mark.slow


def window(log_list, lo, hi):
    return [log for log in log_list if lo <= log.episode_index + 1 <= hi]


@pytest.fixture(scope="module")
def comparison_results():
    return ExperimentService().run_comparison(ExperimentConfig(), ALL_MODES, N_SEEDS, max_workers=os.cpu_count() or 1)


def test_single_agent_learning_is_reported(comparison_results, tmp_path):
    single = [r for r in comparison_results if r.config.mode is AlgorithmMode.SINGLE_AGENT]
    summary = build_comparison_summary(single)
    assert len(summary.learning) == N_SEEDS
    for row in summary.learning.itertuples(index=False):
        result = next(r for r in single if r.config.obstacle_seed == row.seed)
        early = np.mean([log.iterations_used for log in window(result.episodes, 1, 10)])
        late = window(result.episodes, 61, 80)
        expected = (np.mean([log.iterations_used for log in late]) < 0.5 * early
                    and all(log.reached_goal for log in late))
        assert bool(row.improved) == expected
    text = emit_ranking_report(summary, tmp_path / "ranking.txt").read_text(encoding="utf-8")
    assert ("LEARNING_OK" in text) if summary.learning_ok else ("LEARNING_MISMATCH" in text)


def test_ranking_is_reported(comparison_results, tmp_path):
    summary = build_comparison_summary(comparison_results)
    assert summary.n_seeds == N_SEEDS
    text = emit_ranking_report(summary, tmp_path / "ranking.txt").read_text(encoding="utf-8")
    assert ("RANKING_OK" in text) if summary.ranking_ok else ("RANKING_MISMATCH" in text)


def test_cooperative_reaches_goal_late(comparison_results):
    late = [log for result in comparison_results if result.config.mode is AlgorithmMode.COOPERATIVE
            for log in window(result.episodes, 61, 80)]
    assert len(late) == 20 * N_SEEDS
    assert sum(log.reached_goal for log in late) / len(late) >= 0.95


def test_compare_command_outputs(tmp_path):
    out = tmp_path / "cmp"
    assert cli_main(["compare", "--seeds", "1", "--workers", "2", "--out", str(out)]) == 0
    df = pd.read_csv(out / "comparison_summary.csv")
    assert len(df) == 80
    assert list(df.columns) == ["episode"] + [m.value for m in ALL_MODES]
