"""Command line front end.

Subcommands mirror the library pipeline: collect traces, fit a threshold,
generate from one prompt, evaluate a dataset, analyze traces, and sweep the
lookahead length or the threshold offset. A model comes from either a mock
definition file (--mock) or a running bridge (--bridge-url or the
ENTRODEC_BRIDGE_URL environment variable).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, harness, threshold
from .decoding import BasePolicy, DecodeConfig, parse_tau, write_step_log
from .errors import EngineError
from .lm import load_mock_file
from .remote import BRIDGE_URL_ENV, RemoteModel


def _parse_tokens(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.replace(",", " ").split())


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mock", help="path to a mock model JSON definition")
    p.add_argument("--bridge-url",
                   help=f"bridge base URL (falls back to ${BRIDGE_URL_ENV})")
    p.add_argument("--top-m", type=int, default=64,
                   help="top-M slice requested from a bridge (default 64)")


def _load_model(args):
    if args.mock:
        return load_mock_file(args.mock)
    url = args.bridge_url or os.environ.get(BRIDGE_URL_ENV)
    if url:
        return RemoteModel(url, top_m=args.top_m)
    raise SystemExit("no model: pass --mock or --bridge-url "
                     f"(or set ${BRIDGE_URL_ENV})")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", default="adaptive",
                   choices=["adaptive", "base", "beam", "line-temp"])
    p.add_argument("--policy", default="greedy",
                   choices=["greedy", "temperature", "top_k", "top_p"],
                   help="base policy at non-paused steps")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--k", type=int, help="k for the top_k policy")
    p.add_argument("--p", type=float, help="p for the top_p policy")
    p.add_argument("--tau",
                   help="pause threshold in nats, or never-pause/always-pause")
    p.add_argument("--threshold-model",
                   help="threshold JSON; supplies tau when --tau is absent")
    p.add_argument("--candidates", type=int, default=3,
                   help="candidate pool size reranked at a pause (default 3)")
    p.add_argument("--lookahead", type=int, default=5,
                   help="greedy rollout length per candidate (default 5)")
    p.add_argument("--max-len", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam-width", type=int, default=3)
    p.add_argument("--high-temp", type=float, default=0.5)
    p.add_argument("--low-temp", type=float, default=0.05)
    p.add_argument("--newline-token", type=int, action="append", default=[],
                   help="token id treated as a line break (repeatable)")


def _build_config(args) -> tuple[DecodeConfig, "threshold.ThresholdModel | None"]:
    policy = BasePolicy(kind=args.policy, temperature=args.temperature,
                        k=args.k, p=args.p)
    tmodel = None
    if args.threshold_model:
        tmodel = threshold.ThresholdModel.load(args.threshold_model)
    tau = parse_tau(args.tau) if args.tau is not None else None
    config = DecodeConfig(strategy=args.strategy, base_policy=policy, tau=tau,
                          candidates=args.candidates,
                          lookahead=args.lookahead, max_len=args.max_len,
                          seed=args.seed, beam_width=args.beam_width,
                          high_temp=args.high_temp, low_temp=args.low_temp)
    return config, tmodel


def _line_start_pred(args):
    if not args.newline_token:
        return None
    breaks = set(args.newline_token)
    return lambda tok: tok in breaks


def _cmd_collect(args) -> int:
    model = _load_model(args)
    problems = harness.load_dataset(args.dataset, require_reference=True)
    pred = _line_start_pred(args)
    triples = ((p.id, p.prompt_tokens, p.reference_tokens) for p in problems)
    traces = threshold.collect(model, triples, line_break=pred)
    threshold.write_traces(traces, args.out)
    print(f"wrote {len(traces)} traces to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    traces = threshold.read_traces(args.traces)
    train, val = threshold.balance(traces, seed=args.seed)
    fit = threshold.fit_logistic(train)
    model = threshold.select_threshold(fit, val, model_id=args.model_id,
                                       seed=args.seed)
    model.save(args.out)
    report = threshold.evaluate_classifier(fit, model.tau, val)
    print(f"tau={model.tau:.6f} p*={model.p_star:.2f} "
          f"beta0={model.beta0:.6f} beta1={model.beta1:.6f}")
    print(f"validation accuracy={report.accuracy:.4f} f1={report.f1:.4f} "
          f"auc={'n/a' if report.auc is None else f'{report.auc:.4f}'}")
    if fit.separable:
        print("note: training classes were separable; ridge kept the fit finite")
    return 0


def _cmd_generate(args) -> int:
    model = _load_model(args)
    config, tmodel = _build_config(args)
    config = harness.resolve_tau(config, tmodel)
    result = harness.generate(model, _parse_tokens(args.prompt), config,
                              _line_start_pred(args))
    print(" ".join(str(t) for t in result.tokens))
    print(f"finished: {result.finished_reason}  "
          f"pause_rate={result.pause_rate:.4f}", file=sys.stderr)
    if args.step_log:
        write_step_log(result, args.step_log)
    return 0


def _cmd_evaluate(args) -> int:
    model = _load_model(args)
    config, tmodel = _build_config(args)
    problems = harness.load_dataset(args.dataset, require_eval_target=True)
    report = harness.run_eval(model, problems, config, tmodel,
                              _line_start_pred(args))
    if args.out:
        report.write_json(args.out)
    if args.csv:
        report.write_csv(args.csv)
    print(f"pass@1={report.pass_at_1:.4f} "
          f"mean_pause_rate={report.mean_pause_rate:.4f} "
          f"problems={len(report.results)}")
    return 0


def _cmd_analyze(args) -> int:
    if args.kind == "drift":
        if args.generated is None or args.reference is None:
            raise SystemExit("analyze --kind drift needs --generated and "
                             "--reference")
        model = _load_model(args)
        generated = _parse_tokens(args.generated)
        prompt = _parse_tokens(args.prompt or "")
        # Replay the generated prefix to recover per-step rankings.
        session = model.session(prompt)
        from .decoding import StepRecord
        log = []
        for i, tok in enumerate(generated):
            step = session.step()
            log.append(StepRecord(index=i, entropy=step.entropy, paused=False,
                                  chosen=tok, ranked=step.ranked))
            if tok != model.eos_token and i + 1 < len(generated):
                session = session.append(tok)
        cand = analysis.drift_candidates(generated,
                                         _parse_tokens(args.reference), log)
        if cand is None:
            print("no divergence: one sequence is a prefix of the other")
        else:
            print(json.dumps({"index": cand.index,
                              "generated_token": cand.generated_token,
                              "reference_token": cand.reference_token,
                              "gt_rank_at_divergence": cand.gt_rank_at_divergence,
                              "entropy_at_divergence": cand.entropy_at_divergence}))
        return 0

    if not args.traces:
        raise SystemExit(f"analyze --kind {args.kind} needs --traces")
    traces = threshold.read_traces(args.traces)
    if args.kind == "spearman":
        rho = analysis.spearman([t.entropy for t in traces],
                                [t.gt_rank for t in traces])
        print("spearman=undefined" if rho is None else f"spearman={rho:.6f}")
        return 0
    if args.kind == "sweep":
        if not args.out:
            raise SystemExit("analyze --kind sweep needs --out")
        if args.thresholds:
            grid = [float(x) for x in args.thresholds.split(",")]
        else:
            ents = sorted(t.entropy for t in traces)
            lo, hi = ents[0], ents[-1]
            n = args.grid
            stepw = (hi - lo) / max(n - 1, 1)
            grid = [lo + i * stepw for i in range(n)]
        points = analysis.sweep(traces, grid, max_rank_filter=args.max_rank)
        analysis.write_sweep_csv(points, args.out)
        print(f"wrote {len(points)} sweep points to {args.out}")
        return 0
    if args.kind == "summary":
        correct = [t.entropy for t in traces if t.top1_correct]
        wrong = [t.entropy for t in traces if not t.top1_correct]
        sa, sb = analysis.entropy_summary(correct, wrong)
        for name, s in (("correct", sa), ("incorrect", sb)):
            print(f"{name}: n={s.count} mean={s.mean:.4f} "
                  f"median={s.median:.4f} q1={s.q1:.4f} q3={s.q3:.4f}")
        return 0
    raise SystemExit(f"unknown analyze kind {args.kind!r}")


def _cmd_sweep_l(args) -> int:
    model = _load_model(args)
    config, tmodel = _build_config(args)
    problems = harness.load_dataset(args.dataset, require_eval_target=True)
    values = [int(x) for x in args.l_values.split(",")]
    reports = harness.sweep_lookahead(model, problems, config, values, tmodel,
                                      _line_start_pred(args))
    harness.write_sweep_reports(reports, values, "lookahead", args.out)
    for l, rep in zip(values, reports):
        print(f"L={l}: pass@1={rep.pass_at_1:.4f} "
              f"pause_rate={rep.mean_pause_rate:.4f}")
    return 0


def _cmd_sweep_tau(args) -> int:
    model = _load_model(args)
    config, tmodel = _build_config(args)
    problems = harness.load_dataset(args.dataset, require_eval_target=True)
    offsets = [parse_tau(x) if x in ("never-pause", "always-pause")
               else float(x) for x in args.offsets.split(",")]
    reports = harness.sweep_tau_offsets(model, problems, config, offsets,
                                        tmodel, _line_start_pred(args))
    harness.write_sweep_reports(reports, offsets, "tau_offset", args.out)
    for off, rep in zip(offsets, reports):
        print(f"offset={off}: pass@1={rep.pass_at_1:.4f} "
              f"pause_rate={rep.mean_pause_rate:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrodec",
        description="entropy-guided adaptive decoding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="teacher-forced trace collection")
    _add_model_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output traces CSV")
    p.add_argument("--newline-token", type=int, action="append", default=[])
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("fit", help="fit a threshold from collected traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True, help="output threshold JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-id", default="")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("generate", help="decode one prompt")
    _add_model_args(p)
    _add_config_args(p)
    p.add_argument("--prompt", required=True,
                   help="prompt token ids, comma or space separated")
    p.add_argument("--step-log", help="write per-step JSONL here")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="run Pass@1 over a dataset")
    _add_model_args(p)
    _add_config_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--csv", help="per-problem CSV path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="trace analysis and drift inspection")
    _add_model_args(p)
    p.add_argument("--kind", required=True,
                   choices=["spearman", "sweep", "summary", "drift"])
    p.add_argument("--traces", help="traces CSV (spearman/sweep/summary)")
    p.add_argument("--thresholds", help="comma-separated sweep thresholds")
    p.add_argument("--grid", type=int, default=50,
                   help="sweep grid size when --thresholds is absent")
    p.add_argument("--max-rank", type=int, default=20)
    p.add_argument("--out", help="sweep CSV output path")
    p.add_argument("--prompt", help="prompt tokens (drift)")
    p.add_argument("--generated", help="generated tokens (drift)")
    p.add_argument("--reference", help="reference tokens (drift)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("sweep-l", help="Pass@1 across lookahead lengths")
    _add_model_args(p)
    _add_config_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--l-values", required=True,
                   help="comma-separated rollout lengths")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(func=_cmd_sweep_l)

    p = sub.add_parser("sweep-tau", help="Pass@1 across threshold offsets")
    _add_model_args(p)
    _add_config_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--offsets", required=True,
                   help="comma-separated offsets; never-pause/always-pause "
                        "force the extremes")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(func=_cmd_sweep_tau)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
