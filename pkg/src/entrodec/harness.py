"""Execution-based evaluation harness: JSONL datasets, sandboxed test
commands, Pass@1 reports, and the lookahead / threshold-offset sweeps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .decoding import DecodeConfig, GenerationResult, format_tau, generate
from .errors import DataError
from .lm import LanguageModel
from .threshold import ThresholdModel

DEFAULT_TIMEOUT = 10.0


@dataclass(frozen=True)
class Problem:
    """One evaluation item.

    Judging uses `test_command` when present (exit 0 means pass), otherwise
    exact token match against `reference_tokens`; a problem offering neither
    cannot be judged. `detok` optionally maps token ids to text fragments
    for rendering the generated program; without it the program is the
    space-separated token ids.
    """

    id: str
    prompt_tokens: tuple[int, ...] | None = None
    prompt_text: str | None = None
    reference_tokens: tuple[int, ...] | None = None
    test_command: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    detok: tuple[str, ...] | None = None


def _parse_problem(record: dict, lineno: int) -> Problem:
    def fail(msg: str) -> DataError:
        return DataError(f"dataset line {lineno}: {msg}")

    if not isinstance(record, dict):
        raise fail("record is not a JSON object")
    if "id" not in record:
        raise fail("missing required field 'id'")
    prompt_tokens = record.get("prompt_tokens")
    prompt_text = record.get("prompt_text")
    if prompt_tokens is None and prompt_text is None:
        raise fail("needs prompt_tokens (or prompt_text)")
    try:
        if prompt_tokens is not None:
            prompt_tokens = tuple(int(t) for t in prompt_tokens)
        reference = record.get("reference_tokens")
        if reference is not None:
            reference = tuple(int(t) for t in reference)
        timeout = float(record.get("timeout", DEFAULT_TIMEOUT))
        detok = record.get("detok")
        if detok is not None:
            detok = tuple(str(s) for s in detok)
    except (TypeError, ValueError) as exc:
        raise fail(str(exc)) from exc
    if timeout <= 0:
        raise fail("timeout must be positive")
    return Problem(id=str(record["id"]), prompt_tokens=prompt_tokens,
                   prompt_text=prompt_text, reference_tokens=reference,
                   test_command=record.get("test_command"), timeout=timeout,
                   detok=detok)


def load_dataset(path, require_eval_target: bool = False,
                 require_reference: bool = False) -> list[Problem]:
    """Read a JSONL dataset, one problem per line, in file order.

    Validation errors name the offending line. `require_eval_target` insists
    on a judgeable problem (reference tokens or a test command);
    `require_reference` insists on reference tokens, which trace collection
    needs.
    """
    problems = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"dataset line {lineno}: invalid JSON "
                                f"({exc.msg})") from exc
            problem = _parse_problem(record, lineno)
            if require_reference and problem.reference_tokens is None:
                raise DataError(
                    f"dataset line {lineno}: missing reference_tokens")
            if require_eval_target and problem.reference_tokens is None \
                    and problem.test_command is None:
                raise DataError(
                    f"dataset line {lineno}: needs reference_tokens or "
                    "test_command to be judged")
            problems.append(problem)
    return problems


# ---------------------------------------------------------------------------
# Judging
# ---------------------------------------------------------------------------

def _strip_eos(tokens: Sequence[int], eos: int) -> tuple[int, ...]:
    toks = tuple(tokens)
    if toks and toks[-1] == eos:
        return toks[:-1]
    return toks


def render_program(tokens: Sequence[int], eos: int,
                   detok: tuple[str, ...] | None) -> str:
    """Generated tokens as program text: detok join, or space-joined ids."""
    body = _strip_eos(tokens, eos)
    if detok is not None:
        try:
            return "".join(detok[t] for t in body)
        except IndexError as exc:
            raise DataError(f"detok table too short for token: {exc}") from exc
    return " ".join(str(t) for t in body)


def _run_test_command(problem: Problem, program: str
                      ) -> tuple[bool, int | None, bool]:
    """Run the problem's test command sandboxed.

    The program text lands in program.txt inside a throwaway working
    directory; {program} and {program_file} in the template are substituted.
    Returns (passed, exit_status, timed_out); a timeout fails the problem.
    """
    with tempfile.TemporaryDirectory(prefix="entrodec-eval-") as workdir:
        program_file = Path(workdir) / "program.txt"
        program_file.write_text(program, encoding="utf-8")
        command = problem.test_command
        command = command.replace("{program_file}", str(program_file))
        command = command.replace("{program}", shlex.quote(program))
        try:
            proc = subprocess.run(shlex.split(command), cwd=workdir,
                                  capture_output=True, timeout=problem.timeout)
        except subprocess.TimeoutExpired:
            return False, None, True
        except OSError:
            return False, None, False
        return proc.returncode == 0, proc.returncode, False


def _judge(problem: Problem, result: GenerationResult,
           eos: int) -> tuple[bool, int | None, bool]:
    if problem.test_command is not None:
        program = render_program(result.tokens, eos, problem.detok)
        return _run_test_command(problem, program)
    if problem.reference_tokens is not None:
        passed = (_strip_eos(result.tokens, eos)
                  == _strip_eos(problem.reference_tokens, eos))
        return passed, None, False
    raise DataError(f"problem {problem.id} has neither reference_tokens "
                    "nor test_command")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemResult:
    id: str
    passed: bool
    tokens_generated: int
    pause_rate: float
    wall_seconds: float
    exit_status: int | None
    timed_out: bool


@dataclass(frozen=True)
class EvalReport:
    """Per-problem outcomes plus aggregates that recompute from them."""

    config: dict
    fingerprint: str
    results: tuple[ProblemResult, ...]
    pass_at_1: float
    mean_pause_rate: float
    mean_wall_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "aggregate": {"pass_at_1": self.pass_at_1,
                          "mean_pause_rate": self.mean_pause_rate,
                          "mean_wall_seconds": self.mean_wall_seconds,
                          "problems": len(self.results)},
            "per_problem": [{"id": r.id, "passed": r.passed,
                             "tokens_generated": r.tokens_generated,
                             "pause_rate": r.pause_rate,
                             "wall_seconds": r.wall_seconds,
                             "exit_status": r.exit_status,
                             "timed_out": r.timed_out}
                            for r in self.results],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "passed", "tokens_generated",
                             "pause_rate", "wall_seconds"])
            for r in self.results:
                writer.writerow([r.id, int(r.passed), r.tokens_generated,
                                 repr(r.pause_rate), repr(r.wall_seconds)])


def _fingerprint(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def resolve_tau(config: DecodeConfig,
                threshold: ThresholdModel | None) -> DecodeConfig:
    """Fill in config.tau from a learned threshold when it is unset."""
    if config.strategy != "adaptive" or config.tau is not None:
        return config
    if threshold is None:
        raise ValueError("adaptive strategy needs config.tau or a "
                         "threshold model")
    return replace(config, tau=threshold.tau)


def run_eval(model: LanguageModel, problems: Sequence[Problem],
             config: DecodeConfig, threshold: ThresholdModel | None = None,
             line_start: Callable[[int], bool] | None = None) -> EvalReport:
    """Decode and judge every problem once; Pass@1 is the exact pass fraction.

    Per-problem wall time covers generation plus judging and excludes
    dataset loading. Reports are deterministic for a fixed model, dataset,
    and config, timing fields aside.
    """
    if not problems:
        raise DataError("run_eval needs at least one problem")
    config = resolve_tau(config, threshold)
    rows = []
    for problem in problems:
        if problem.prompt_tokens is None:
            raise DataError(
                f"problem {problem.id}: generation needs prompt_tokens; "
                "the step protocol cannot continue a text prompt")
        t0 = time.perf_counter()
        result = generate(model, problem.prompt_tokens, config, line_start)
        passed, exit_status, timed_out = _judge(problem, result, model.eos_token)
        wall = time.perf_counter() - t0
        rows.append(ProblemResult(id=problem.id, passed=passed,
                                  tokens_generated=len(result.tokens),
                                  pause_rate=result.pause_rate,
                                  wall_seconds=wall, exit_status=exit_status,
                                  timed_out=timed_out))
    n = len(rows)
    config_dict = config.to_json_dict()
    return EvalReport(
        config=config_dict, fingerprint=_fingerprint(config_dict),
        results=tuple(rows),
        pass_at_1=sum(1 for r in rows if r.passed) / n,
        mean_pause_rate=sum(r.pause_rate for r in rows) / n,
        mean_wall_seconds=sum(r.wall_seconds for r in rows) / n)


def sweep_lookahead(model: LanguageModel, problems: Sequence[Problem],
                    config: DecodeConfig, l_values: Sequence[int],
                    threshold: ThresholdModel | None = None,
                    line_start: Callable[[int], bool] | None = None
                    ) -> list[EvalReport]:
    """One report per requested rollout length, in input order."""
    config = resolve_tau(config, threshold)
    return [run_eval(model, problems, replace(config, lookahead=int(l)),
                     threshold, line_start) for l in l_values]


def sweep_tau_offsets(model: LanguageModel, problems: Sequence[Problem],
                      config: DecodeConfig, offsets: Sequence[float],
                      threshold: ThresholdModel | None = None,
                      line_start: Callable[[int], bool] | None = None
                      ) -> list[EvalReport]:
    """One report per threshold offset applied to the resolved base tau.

    Offsets of +inf / -inf force the never-pause / always-pause extremes;
    the base threshold itself must be finite for the offsets to mean
    anything.
    """
    config = resolve_tau(config, threshold)
    if config.tau is None or not math.isfinite(config.tau):
        raise ValueError("tau offsets need a finite base threshold")
    return [run_eval(model, problems, replace(config, tau=config.tau + off),
                     threshold, line_start) for off in offsets]


def write_sweep_reports(reports: Sequence[EvalReport], labels: Sequence,
                        label_name: str, path) -> None:
    """Aggregate sweep summary CSV: one row per swept point."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([label_name, "pass_at_1", "mean_pause_rate",
                         "mean_wall_seconds", "fingerprint"])
        for label, report in zip(labels, reports):
            label_out = label
            if isinstance(label, float) and not math.isfinite(label):
                label_out = format_tau(label)
            writer.writerow([label_out, repr(report.pass_at_1),
                             repr(report.mean_pause_rate),
                             repr(report.mean_wall_seconds),
                             report.fingerprint])
