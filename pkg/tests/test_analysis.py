import csv
import math

import numpy as np
import pytest

from entrodec import (DriftCandidate, InconsistencyError, StepRecord,
                      StepTrace, decode_greedy, drift_candidates,
                      entropy_summary, make_table_mock, midranks, spearman,
                      sweep, write_sweep_csv)
from conftest import one_hot


def _trace(entropy, rank):
    return StepTrace(problem_id="p", step_index=0, entropy=float(entropy),
                     gt_rank=int(rank), top1_correct=rank == 1,
                     line_start=False)


def _record(index, chosen, ranked, entropy=0.5, paused=False):
    return StepRecord(index=index, entropy=entropy, paused=paused,
                      chosen=chosen, ranked=tuple(ranked), trajectories=())


# ---------------------------------------------------------------------------
# midranks / spearman
# ---------------------------------------------------------------------------

def test_midranks_without_ties_are_positions():
    assert midranks([30.0, 10.0, 20.0]).tolist() == [3.0, 1.0, 2.0]


def test_midranks_average_tied_runs():
    assert midranks([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]
    assert midranks([5, 5, 5]).tolist() == [2.0, 2.0, 2.0]


def _oracle_midranks(values):
    v = list(map(float, values))
    return [1.0 + sum(1 for u in v if u < x) + (sum(1 for u in v if u == x) - 1) / 2.0
            for x in v]


def test_midranks_match_counting_oracle_on_random_tied_data():
    rng = np.random.default_rng(4)
    for _ in range(100):
        v = rng.integers(0, 6, size=rng.integers(2, 15)).astype(float)
        assert midranks(v).tolist() == _oracle_midranks(v)


def test_spearman_perfect_agreement_and_reversal():
    x = [0.1, 0.4, 0.9, 2.0]
    assert spearman(x, [1, 2, 3, 4]) == pytest.approx(1.0)
    assert spearman(x, [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_spearman_invariant_under_monotone_transform():
    rng = np.random.default_rng(11)
    x = rng.normal(size=40)
    y = rng.normal(size=40)
    base = spearman(x, y)
    assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
    assert spearman(x, 3.0 * y + 7.0) == pytest.approx(base, abs=1e-12)


def test_spearman_matches_pearson_of_oracle_ranks():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(3, 20))
        x = rng.integers(0, 5, size=n).astype(float)
        y = rng.integers(0, 5, size=n).astype(float)
        rx = np.array(_oracle_midranks(x))
        ry = np.array(_oracle_midranks(y))
        got = spearman(x, y)
        if np.all(rx == rx[0]) or np.all(ry == ry[0]):
            assert got is None
        else:
            expected = float(np.corrcoef(rx, ry)[0, 1])
            assert got == pytest.approx(expected, abs=1e-12)


def test_spearman_constant_input_is_absent():
    assert spearman([1.0, 1.0, 1.0], [1, 2, 3]) is None
    assert spearman([1, 2, 3], [7.0, 7.0, 7.0]) is None


def test_spearman_input_validation():
    with pytest.raises(ValueError):
        spearman([1.0], [2.0])
    with pytest.raises(ValueError):
        spearman([1.0, 2.0], [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def test_sweep_worked_example():
    traces = [_trace(0.1, 1), _trace(0.2, 1), _trace(1.5, 2), _trace(2.0, 6)]
    (pt,) = sweep(traces, [1.0])
    assert pt.threshold == 1.0
    assert pt.pct_above == 0.5
    assert pt.avg_rank_above == 4.0
    assert pt.avg_rank_below == 1.0


def test_sweep_boundary_entropy_counts_as_below():
    traces = [_trace(1.0, 3), _trace(1.5, 5)]
    (pt,) = sweep(traces, [1.0])
    assert pt.pct_above == 0.5
    assert pt.avg_rank_below == 3.0


def test_sweep_rank_filter_only_affects_averages():
    traces = [_trace(2.0, 150), _trace(2.0, 4), _trace(0.1, 1)]
    (pt,) = sweep(traces, [1.0], max_rank_filter=20)
    assert pt.pct_above == pytest.approx(2 / 3)  # rank-150 trace still counts
    assert pt.avg_rank_above == 4.0              # but not here
    (unfiltered,) = sweep(traces, [1.0], max_rank_filter=1000)
    assert unfiltered.avg_rank_above == 77.0


def test_sweep_empty_side_reports_absent():
    traces = [_trace(0.2, 1), _trace(0.3, 2)]
    lo, hi = sweep(traces, [0.0, 5.0])
    assert lo.avg_rank_below is None and lo.pct_above == 1.0
    assert hi.avg_rank_above is None and hi.pct_above == 0.0


def test_sweep_pct_above_is_monotone_nonincreasing():
    rng = np.random.default_rng(8)
    traces = [_trace(rng.uniform(0, 3), rng.integers(1, 30))
              for _ in range(500)]
    points = sweep(traces, np.linspace(0.0, 3.0, 40))
    pcts = [p.pct_above for p in points]
    assert all(a >= b for a, b in zip(pcts, pcts[1:]))


def test_sweep_rejects_empty_traces():
    with pytest.raises(ValueError):
        sweep([], [1.0])


def test_sweep_csv_round_trip(tmp_path):
    points = sweep([_trace(0.2, 1), _trace(1.4, 30)], [1.0, 2.0])
    path = tmp_path / "sweep.csv"
    write_sweep_csv(points, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["threshold", "pct_above",
                       "avg_rank_above", "avg_rank_below"]
    assert float(rows[1][0]) == 1.0
    assert float(rows[1][1]) == 0.5
    assert rows[1][2] == ""              # rank-30 trace filtered out
    assert float(rows[1][3]) == 1.0
    assert rows[2][1:] == ["0.0", "", "1.0"]


# ---------------------------------------------------------------------------
# drift_candidates
# ---------------------------------------------------------------------------

def test_drift_identical_sequences_yield_none():
    log = [_record(0, 5, [(5, -0.1), (2, -2.0)])]
    assert drift_candidates([5], [5], log) is None


def test_drift_prefix_relation_yields_none():
    log = [_record(0, 5, [(5, -0.1)]), _record(1, 6, [(6, -0.1)])]
    assert drift_candidates([5, 6], [5, 6, 7], log) is None
    assert drift_candidates([5, 6], [5], log) is None


def test_drift_reports_first_divergence():
    log = [_record(0, 1, [(1, -0.2), (9, -1.7)], entropy=0.25),
           _record(1, 4, [(4, -0.3), (8, -1.5), (2, -2.0)], entropy=1.75)]
    cand = drift_candidates([1, 4, 6], [1, 2, 6], log)
    assert cand == DriftCandidate(index=1, generated_token=4,
                                  reference_token=2,
                                  gt_rank_at_divergence=3,
                                  entropy_at_divergence=1.75)


def test_drift_rank_floor_when_reference_absent_from_ranking():
    log = [_record(0, 1, [(1, -0.2), (3, -1.7)])]
    cand = drift_candidates([1, 5], [9, 5], log + [_record(1, 5, [(5, -0.1)])])
    assert cand.index == 0
    assert cand.gt_rank_at_divergence == 3  # two ranked entries + 1


def test_drift_short_log_is_inconsistent():
    with pytest.raises(InconsistencyError):
        drift_candidates([1, 4], [1, 2], [_record(0, 1, [(1, -0.1)])])


def test_drift_chosen_mismatch_is_inconsistent():
    log = [_record(0, 7, [(7, -0.1)])]
    with pytest.raises(InconsistencyError):
        drift_candidates([1], [2], log)


def test_drift_empty_ranking_is_inconsistent():
    log = [_record(0, 1, [])]
    with pytest.raises(InconsistencyError):
        drift_candidates([1], [2], log)


def test_drift_from_a_real_decode_log():
    m = make_table_mock(
        [([0], [0.1, 0.6, 0.3, 0.0]),
         ([0, 1], one_hot(4, 3))],
        one_hot(4, 3), eos_token=3)
    result = decode_greedy(m, [0], max_len=8)
    assert result.tokens == (1, 3)
    cand = drift_candidates(result.tokens, [2, 3], result.step_log)
    assert cand.index == 0
    assert cand.generated_token == 1 and cand.reference_token == 2
    assert cand.gt_rank_at_divergence == 2
    assert cand.entropy_at_divergence == pytest.approx(
        -(0.1 * math.log(0.1) + 0.6 * math.log(0.6) + 0.3 * math.log(0.3)))


# ---------------------------------------------------------------------------
# drift test above ensures ranked comes straight off step logs; summary next
# ---------------------------------------------------------------------------

def test_entropy_summary_quartiles_linear_interpolation():
    a, b = entropy_summary([1.0, 2.0, 3.0, 4.0], [5.0, 5.0])
    assert a.count == 4 and a.mean == 2.5 and a.median == 2.5
    assert a.q1 == 1.75 and a.q3 == 3.25
    assert b.count == 2 and b.median == 5.0 and b.q1 == 5.0


def test_entropy_summary_rejects_empty_group():
    with pytest.raises(ValueError):
        entropy_summary([], [1.0])
