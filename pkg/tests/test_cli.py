"""End-to-end CLI runs: every subcommand through cli.main on real files."""

import json

import pytest

from entrodec import StepTrace, cli, make_table_mock, write_traces
from conftest import one_hot

ENT_FORK = 0.96336014665959180372   # H(0.45, 0.44, 0.11)
ENT_SHARP = 0.26782996140186713889  # H(0.95, 4 x 0.0125)
ENT_FLAT = 1.5148560404565352562    # H(0.3, 0.25, 0.25, 0.1, 0.1)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Mock definition, datasets, and a crafted traces file on disk."""
    root = tmp_path_factory.mktemp("cli")
    mock = make_table_mock(
        [([0, 1], [0.0, 0.0, 0.45, 0.44, 0.11]),
         ([1, 2], [0.3, 0.25, 0.25, 0.1, 0.1]),
         ([2, 0], [0.3, 0.25, 0.25, 0.1, 0.1]),
         ([1, 3], [0.95, 0.0125, 0.0125, 0.0125, 0.0125]),
         ([3, 0], [0.0125, 0.0125, 0.0125, 0.0125, 0.95])],
        one_hot(5, 4), eos_token=4)
    paths = {
        "mock": root / "mock.json",
        "dataset": root / "dataset.jsonl",
        "fork_only": root / "fork.jsonl",
        "traces": root / "traces.csv",
        "root": root,
    }
    paths["mock"].write_text(json.dumps(mock.to_json_dict()))
    fork = {"id": "fork", "prompt_tokens": [0, 1], "reference_tokens": [3, 0]}
    drift = {"id": "drift", "prompt_tokens": [0, 1],
             "reference_tokens": [2, 0, 0]}
    paths["dataset"].write_text(json.dumps(fork) + "\n" + json.dumps(drift) + "\n")
    paths["fork_only"].write_text(json.dumps(fork) + "\n")

    # Correctness concentrates below entropy 0.6, with a few flipped labels
    # so the classes overlap and the logistic fit stays tame.
    traces = []
    for i in range(18):
        traces.append(StepTrace("syn", len(traces), 0.1 + 0.025 * i, 1, True, False))
    for h in (1.1, 1.2):
        traces.append(StepTrace("syn", len(traces), h, 1, True, False))
    for i in range(18):
        traces.append(StepTrace("syn", len(traces), 0.7 + 0.1 * i, 3, False, False))
    for h in (0.35, 0.45):
        traces.append(StepTrace("syn", len(traces), h, 2, False, False))
    write_traces(traces, paths["traces"])
    return paths


def _run(capsys, argv):
    rc = cli.main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def test_generate_base_greedy(ws, capsys):
    rc, out, err = _run(capsys, [
        "generate", "--mock", str(ws["mock"]), "--strategy", "base",
        "--prompt", "0 1", "--max-len", "16"])
    assert rc == 0
    assert out.splitlines()[0] == "2 0 0 4"
    assert "finished: eos" in err


def test_generate_adaptive_rescues_and_logs_steps(ws, capsys, tmp_path):
    log_path = tmp_path / "steps.jsonl"
    rc, out, _ = _run(capsys, [
        "generate", "--mock", str(ws["mock"]), "--strategy", "adaptive",
        "--tau", "0.5", "--candidates", "2", "--lookahead", "2",
        "--prompt", "0,1", "--max-len", "16", "--step-log", str(log_path)])
    assert rc == 0
    assert out.splitlines()[0] == "3 0 4"
    lines = [json.loads(l) for l in log_path.read_text().splitlines()]
    assert len(lines) == 3
    assert lines[0]["paused"] is True
    assert {c["token"] for c in lines[0]["candidates"]} == {2, 3}
    assert lines[1]["paused"] is False


def test_generate_never_pause_sentinel_is_greedy(ws, capsys):
    rc, out, _ = _run(capsys, [
        "generate", "--mock", str(ws["mock"]), "--tau", "never-pause",
        "--prompt", "0 1", "--max-len", "16"])
    assert rc == 0
    assert out.splitlines()[0] == "2 0 0 4"


def test_generate_without_model_exits(ws, capsys, monkeypatch):
    monkeypatch.delenv(cli.BRIDGE_URL_ENV, raising=False)
    with pytest.raises(SystemExit, match="no model"):
        cli.main(["generate", "--prompt", "0"])


# ---------------------------------------------------------------------------
# collect
# ---------------------------------------------------------------------------

def test_collect_writes_teacher_forced_traces(ws, capsys, tmp_path):
    out_path = tmp_path / "collected.csv"
    rc, out, _ = _run(capsys, [
        "collect", "--mock", str(ws["mock"]), "--dataset", str(ws["dataset"]),
        "--out", str(out_path)])
    assert rc == 0
    assert "wrote 5 traces" in out
    rows = out_path.read_text().splitlines()
    assert len(rows) == 6  # header + 5
    fork0 = rows[1].split(",")
    assert fork0[0] == "fork" and fork0[3] == "2" and fork0[4] == "0"
    assert float(fork0[2]) == pytest.approx(ENT_FORK, abs=1e-12)
    assert float(rows[2].split(",")[2]) == pytest.approx(ENT_SHARP, abs=1e-12)
    drift_rows = [r.split(",") for r in rows[3:]]
    assert all(r[0] == "drift" and r[3] == "1" and r[4] == "1"
               for r in drift_rows)
    assert float(drift_rows[1][2]) == pytest.approx(ENT_FLAT, abs=1e-12)


def test_collect_newline_token_sets_line_starts(ws, capsys, tmp_path):
    out_path = tmp_path / "collected.csv"
    rc, _, _ = _run(capsys, [
        "collect", "--mock", str(ws["mock"]), "--dataset", str(ws["dataset"]),
        "--out", str(out_path), "--newline-token", "0"])
    assert rc == 0
    rows = [r.split(",") for r in out_path.read_text().splitlines()[1:]]
    # fork gt (3, 0): starts True, then prev-gt 3 is no break.
    # drift gt (2, 0, 0): True, prev 2 no break, prev 0 breaks.
    assert [r[5] for r in rows] == ["1", "0", "1", "0", "1"]


# ---------------------------------------------------------------------------
# fit, then evaluate with the learned threshold
# ---------------------------------------------------------------------------

def test_fit_then_evaluate_with_learned_threshold(ws, capsys, tmp_path):
    tjson = tmp_path / "threshold.json"
    rc, out, _ = _run(capsys, [
        "fit", "--traces", str(ws["traces"]), "--out", str(tjson),
        "--seed", "0", "--model-id", "mock-fork"])
    assert rc == 0
    assert out.startswith("tau=")
    assert "validation accuracy=" in out
    saved = json.loads(tjson.read_text())
    assert saved["model_id"] == "mock-fork"
    assert saved["beta1"] < 0
    # The class boundary sits near entropy 0.6, inside the band that pauses
    # the fork step (H 0.963) but not the sharp step (H 0.268).
    assert 0.3 < saved["tau"] < 0.95

    report_path = tmp_path / "report.json"
    rc, out, _ = _run(capsys, [
        "evaluate", "--mock", str(ws["mock"]), "--dataset", str(ws["fork_only"]),
        "--strategy", "adaptive", "--threshold-model", str(tjson),
        "--candidates", "2", "--lookahead", "2", "--max-len", "16",
        "--out", str(report_path)])
    assert rc == 0
    assert "pass@1=1.0000" in out
    report = json.loads(report_path.read_text())
    assert report["aggregate"]["pass_at_1"] == 1.0
    assert report["config"]["tau"] == saved["tau"]


def test_evaluate_base_vs_adaptive_per_problem(ws, capsys, tmp_path):
    report_path = tmp_path / "base.json"
    csv_path = tmp_path / "base.csv"
    rc, out, _ = _run(capsys, [
        "evaluate", "--mock", str(ws["mock"]), "--dataset", str(ws["dataset"]),
        "--strategy", "base", "--max-len", "16",
        "--out", str(report_path), "--csv", str(csv_path)])
    assert rc == 0
    assert "pass@1=0.5000" in out
    per = {r["id"]: r["passed"] for r in
           json.loads(report_path.read_text())["per_problem"]}
    assert per == {"fork": False, "drift": True}
    assert csv_path.read_text().splitlines()[0].startswith("id,passed")

    rc, out, _ = _run(capsys, [
        "evaluate", "--mock", str(ws["mock"]), "--dataset", str(ws["dataset"]),
        "--strategy", "adaptive", "--tau", "0.5", "--candidates", "2",
        "--lookahead", "2", "--max-len", "16", "--out", str(report_path)])
    assert rc == 0
    per = {r["id"]: r["passed"] for r in
           json.loads(report_path.read_text())["per_problem"]}
    assert per == {"fork": True, "drift": False}


def test_evaluate_adaptive_without_tau_fails_cleanly(ws, capsys):
    rc, _, err = _run(capsys, [
        "evaluate", "--mock", str(ws["mock"]), "--dataset", str(ws["dataset"]),
        "--strategy", "adaptive", "--max-len", "16"])
    assert rc == 1
    assert err.startswith("error:")


def test_evaluate_reports_dataset_line_errors(ws, capsys, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    rc, _, err = _run(capsys, [
        "evaluate", "--mock", str(ws["mock"]), "--dataset", str(bad),
        "--strategy", "base"])
    assert rc == 1
    assert "line 1" in err


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def test_analyze_spearman(ws, capsys):
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "spearman", "--traces", str(ws["traces"])])
    assert rc == 0
    assert out.startswith("spearman=")
    # Low entropy mostly rank 1, high entropy mostly rank 3: positive rho.
    assert float(out.split("=")[1]) > 0.5


def test_analyze_sweep_explicit_thresholds(ws, capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "sweep", "--traces", str(ws["traces"]),
        "--thresholds", "0.5,1.0,2.0", "--out", str(out_path)])
    assert rc == 0
    assert "wrote 3 sweep points" in out
    lines = out_path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[1].split(",")[0] == "0.5"


def test_analyze_sweep_grid_default(ws, capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "sweep", "--traces", str(ws["traces"]),
        "--grid", "10", "--out", str(out_path)])
    assert rc == 0
    lines = out_path.read_text().splitlines()
    assert len(lines) == 11
    # Grid spans the observed entropy range.
    assert float(lines[1].split(",")[0]) == pytest.approx(0.1)
    assert float(lines[-1].split(",")[0]) == pytest.approx(2.4)


def test_analyze_sweep_requires_out(ws, capsys):
    with pytest.raises(SystemExit):
        cli.main(["analyze", "--kind", "sweep", "--traces", str(ws["traces"])])


def test_analyze_requires_traces(ws):
    with pytest.raises(SystemExit):
        cli.main(["analyze", "--kind", "spearman"])


def test_analyze_summary(ws, capsys):
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "summary", "--traces", str(ws["traces"])])
    assert rc == 0
    lines = out.splitlines()
    assert lines[0].startswith("correct: n=20")
    assert lines[1].startswith("incorrect: n=20")


def test_analyze_drift_reports_divergence(ws, capsys):
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "drift", "--mock", str(ws["mock"]),
        "--prompt", "0 1", "--generated", "2 0 0 4", "--reference", "3 0"])
    assert rc == 0
    cand = json.loads(out)
    assert cand["index"] == 0
    assert cand["generated_token"] == 2 and cand["reference_token"] == 3
    assert cand["gt_rank_at_divergence"] == 2
    assert cand["entropy_at_divergence"] == pytest.approx(ENT_FORK, abs=1e-12)


def test_analyze_drift_prefix_is_no_divergence(ws, capsys):
    rc, out, _ = _run(capsys, [
        "analyze", "--kind", "drift", "--mock", str(ws["mock"]),
        "--prompt", "0 1", "--generated", "3 0", "--reference", "3 0 1"])
    assert rc == 0
    assert "no divergence" in out


def test_analyze_drift_requires_sequences(ws):
    with pytest.raises(SystemExit):
        cli.main(["analyze", "--kind", "drift", "--mock", str(ws["mock"]),
                  "--generated", "1 2"])


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def test_sweep_l_cli(ws, capsys, tmp_path):
    out_path = tmp_path / "l.csv"
    rc, out, _ = _run(capsys, [
        "sweep-l", "--mock", str(ws["mock"]), "--dataset", str(ws["fork_only"]),
        "--strategy", "adaptive", "--tau", "0.5", "--candidates", "2",
        "--max-len", "16", "--l-values", "0,2", "--out", str(out_path)])
    assert rc == 0
    assert "L=0: pass@1=0.0000" in out
    assert "L=2: pass@1=1.0000" in out
    lines = out_path.read_text().splitlines()
    assert lines[0].startswith("lookahead,")
    assert lines[1].startswith("0,0.0,")
    assert lines[2].startswith("2,1.0,")


def test_sweep_tau_cli(ws, capsys, tmp_path):
    out_path = tmp_path / "tau.csv"
    rc, out, _ = _run(capsys, [
        "sweep-tau", "--mock", str(ws["mock"]), "--dataset", str(ws["fork_only"]),
        "--strategy", "adaptive", "--tau", "0.5", "--candidates", "2",
        "--lookahead", "2", "--max-len", "16",
        "--offsets", "always-pause,0.0,never-pause", "--out", str(out_path)])
    assert rc == 0
    assert "pass@1=1.0000" in out
    lines = out_path.read_text().splitlines()
    assert lines[1].startswith("always-pause,")
    assert lines[2].startswith("0.0,1.0,")
    assert lines[3].startswith("never-pause,0.0,")
