"""Learned pause threshold: teacher-forced trace collection, balanced
splitting, logistic regression on entropy, and cutoff selection.

The pipeline turns "was the argmax token the ground-truth token?" into a
binary label per solution position, fits P(correct | entropy) with a
one-feature logistic model, picks the accuracy-maximizing probability cutoff
on held-out traces, and converts that cutoff into an entropy threshold
through the model's inverse link.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .analysis import midranks
from .errors import ContextLimitError, DataError, FitQualityError
from .lm import LanguageModel
from .signals import rank_of

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("problem_id", "step_index", "entropy", "gt_rank",
                "top1_correct", "line_start")

# IRLS settings; the ridge keeps separated data finite.
_RIDGE = 1e-6
_PARAM_TOL = 1e-8
_MAX_ITER = 500


@dataclass(frozen=True)
class StepTrace:
    """One teacher-forced step: uncertainty plus correctness of the argmax."""

    problem_id: str
    step_index: int
    entropy: float
    gt_rank: int
    top1_correct: bool
    line_start: bool


def collect(model: LanguageModel,
            dataset: Iterable[tuple[str, Sequence[int], Sequence[int]]],
            line_break: Callable[[int], bool] | None = None) -> list[StepTrace]:
    """Teacher-forced trace collection over (id, prompt, solution) triples.

    Every solution position k conditions the model on prompt plus the
    ground-truth prefix solution[:k], so traces measure the model's
    uncertainty along the correct path, not along its own drifted one.
    Problems whose combined length overflows the context are skipped with a
    warning; an empty solution contributes no traces. Invalid token ids
    raise, since silently dropping them would poison the labels.
    """
    traces: list[StepTrace] = []
    for problem_id, prompt, solution in dataset:
        solution = tuple(int(t) for t in solution)
        rows: list[StepTrace] = []
        try:
            session = model.session(prompt)
            for k, gt in enumerate(solution):
                model.check_token(gt)
                step = session.step()
                rank = rank_of(step, gt)
                start = k == 0 or (line_break is not None
                                   and line_break(solution[k - 1]))
                rows.append(StepTrace(problem_id=str(problem_id), step_index=k,
                                      entropy=step.entropy, gt_rank=rank,
                                      top1_correct=rank == 1, line_start=start))
                if k + 1 < len(solution):
                    session = session.append(gt)
        except ContextLimitError:
            logger.warning("skipping %s: context limit overflow", problem_id)
            continue
        traces.extend(rows)
    return traces


def write_traces(traces: Sequence[StepTrace], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for t in traces:
            writer.writerow([t.problem_id, t.step_index, repr(t.entropy),
                             t.gt_rank, int(t.top1_correct), int(t.line_start)])


def read_traces(path) -> list[StepTrace]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_FIELDS:
            raise DataError(f"unexpected trace header {header!r}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_FIELDS):
                raise DataError(f"line {lineno}: expected "
                                f"{len(TRACE_FIELDS)} fields, got {len(row)}")
            try:
                out.append(StepTrace(
                    problem_id=row[0], step_index=int(row[1]),
                    entropy=float(row[2]), gt_rank=int(row[3]),
                    top1_correct=bool(int(row[4])),
                    line_start=bool(int(row[5]))))
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
        return out


def balance(traces: Sequence[StepTrace],
            seed: int) -> tuple[list[StepTrace], list[StepTrace]]:
    """Downsample the majority class, then split 80/20 stratified.

    The majority class is sampled without replacement down to the minority
    count (original order kept); each class is then shuffled and cut at
    round(0.8 n) so train and validation stay balanced to within a sample.
    Deterministic for a given seed and input order.
    """
    pos = [t for t in traces if t.top1_correct]
    neg = [t for t in traces if not t.top1_correct]
    if not pos or not neg:
        raise DataError("balance needs both correct and incorrect traces")
    rng = np.random.default_rng(seed)
    n = min(len(pos), len(neg))

    def downsample(group: list[StepTrace]) -> list[StepTrace]:
        if len(group) == n:
            return list(group)
        keep = np.sort(rng.choice(len(group), size=n, replace=False))
        return [group[i] for i in keep]

    pos, neg = downsample(pos), downsample(neg)
    cut = int(round(0.8 * n))
    train: list[StepTrace] = []
    val: list[StepTrace] = []
    for group in (pos, neg):
        perm = rng.permutation(n)
        train.extend(group[i] for i in perm[:cut])
        val.extend(group[i] for i in perm[cut:])
    return train, val


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticFit:
    """Fitted P(correct | entropy) = sigmoid(beta0 + beta1 * entropy)."""

    beta0: float
    beta1: float
    converged: bool
    iterations: int
    separable: bool   # classes have disjoint entropy ranges; ridge kept finite
    degenerate: bool  # all entropies equal; slope is not identified
    n_pos: int
    n_neg: int

    def predict(self, entropies) -> np.ndarray:
        h = np.asarray(entropies, dtype=np.float64)
        return _sigmoid(self.beta0 + self.beta1 * h)


def fit_logistic(train: Sequence[StepTrace]) -> LogisticFit:
    """Fit the one-feature logistic model by iteratively reweighted least
    squares.

    Args:
        train: Traces carrying (entropy, top1_correct) pairs; both labels
            must be present.

    Returns:
        A `LogisticFit`. Perfectly separated data converges to finite
        parameters thanks to the L2 ridge and is flagged `separable`;
        zero-variance entropy is flagged `degenerate` instead of producing a
        spurious slope.

    Raises:
        DataError: On an empty set or a single-class label vector.
    """
    if not train:
        raise DataError("fit needs a non-empty training set")
    h = np.array([t.entropy for t in train], dtype=np.float64)
    y = np.array([1.0 if t.top1_correct else 0.0 for t in train])
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("fit needs both classes in the training labels")

    x = np.column_stack([np.ones_like(h), h])
    beta = np.zeros(2)
    eye = np.eye(2)
    converged = False
    iterations = 0
    for iterations in range(1, _MAX_ITER + 1):
        mu = _sigmoid(x @ beta)
        w = mu * (1.0 - mu)
        grad = x.T @ (y - mu) - _RIDGE * beta
        hess = x.T @ (w[:, None] * x) + _RIDGE * eye
        delta = np.linalg.solve(hess, grad)
        beta = beta + delta
        if float(np.abs(delta).max()) < _PARAM_TOL:
            converged = True
            break

    hp, hn = h[y == 1.0], h[y == 0.0]
    separable = bool(hp.max() < hn.min() or hn.max() < hp.min())
    degenerate = bool(h.min() == h.max())
    return LogisticFit(beta0=float(beta[0]), beta1=float(beta[1]),
                       converged=converged, iterations=iterations,
                       separable=separable, degenerate=degenerate,
                       n_pos=n_pos, n_neg=n_neg)


@dataclass(frozen=True)
class ThresholdModel:
    """A deployable pause threshold with the fit that produced it."""

    beta0: float
    beta1: float
    p_star: float
    tau: float
    model_id: str
    seed: int | None
    counts: dict

    def to_json_dict(self) -> dict:
        return {"beta0": self.beta0, "beta1": self.beta1,
                "p_star": self.p_star, "tau": self.tau,
                "model_id": self.model_id, "seed": self.seed,
                "counts": dict(self.counts)}

    @classmethod
    def from_json_dict(cls, data: dict) -> "ThresholdModel":
        try:
            return cls(beta0=float(data["beta0"]), beta1=float(data["beta1"]),
                       p_star=float(data["p_star"]), tau=float(data["tau"]),
                       model_id=str(data.get("model_id", "")),
                       seed=data.get("seed"),
                       counts=dict(data.get("counts", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed threshold model: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ThresholdModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def tau_for_cutoff(beta0: float, beta1: float, p_star: float) -> float:
    """Entropy threshold whose predicted correctness equals `p_star`.

    Inverts the logistic link: sigmoid(beta0 + beta1 * tau) == p_star.
    """
    if not 0.0 < p_star < 1.0:
        raise ValueError("p_star must lie strictly inside (0, 1)")
    if beta1 >= 0.0:
        raise ValueError("slope must be negative for the inversion")
    return (math.log(p_star / (1.0 - p_star)) - beta0) / beta1


def select_threshold(fit: LogisticFit, validation: Sequence[StepTrace],
                     model_id: str = "", seed: int | None = None
                     ) -> ThresholdModel:
    """Pick the accuracy-maximizing probability cutoff and invert it.

    Scans the 99 cutoffs 0.01..0.99 (step 0.01) over the validation traces,
    classifying a step positive when the predicted probability strictly
    exceeds the cutoff. Accuracy ties resolve to the smaller cutoff. The
    winning p* maps to an entropy threshold through the inverse link:
    tau = (log(p*/(1-p*)) - beta0) / beta1.

    Raises:
        FitQualityError: When the fitted slope is not negative; higher
            entropy must lower predicted correctness for the inversion to
            mean anything.
        DataError: On an empty validation set.
    """
    if fit.beta1 >= 0.0:
        raise FitQualityError(
            f"fitted slope {fit.beta1!r} is not negative; entropy does not "
            "predict correctness in this fit")
    if not validation:
        raise DataError("validation set must be non-empty")
    h = np.array([t.entropy for t in validation], dtype=np.float64)
    y = np.array([t.top1_correct for t in validation], dtype=bool)
    prob = fit.predict(h)
    best_cut = None
    best_acc = -1.0
    for i in range(1, 100):
        cut = i / 100.0
        acc = float(((prob > cut) == y).mean())
        if acc > best_acc:  # strict improvement keeps the smallest cutoff
            best_acc, best_cut = acc, cut
    tau = tau_for_cutoff(fit.beta0, fit.beta1, best_cut)
    counts = {"train_positive": fit.n_pos, "train_negative": fit.n_neg,
              "validation_positive": int(y.sum()),
              "validation_negative": int((~y).sum())}
    return ThresholdModel(beta0=fit.beta0, beta1=fit.beta1, p_star=best_cut,
                          tau=tau, model_id=model_id, seed=seed, counts=counts)


@dataclass(frozen=True)
class ClassifierReport:
    """Validation metrics for the entropy-cutoff classifier.

    The positive class is "argmax token is correct", predicted when entropy
    is at or below tau. AUC is threshold-free, computed from the rank
    statistic over predicted probabilities; it is None when the validation
    labels are single-class.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    tp: int
    fp: int
    fn: int
    tn: int


def evaluate_classifier(fit: LogisticFit, tau: float,
                        validation: Sequence[StepTrace]) -> ClassifierReport:
    if not validation:
        raise DataError("validation set must be non-empty")
    h = np.array([t.entropy for t in validation], dtype=np.float64)
    y = np.array([t.top1_correct for t in validation], dtype=bool)
    pred = h <= tau
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    tn = int((~pred & ~y).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2.0 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        auc = None
    else:
        ranks = midranks(fit.predict(h))
        auc = float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0)
                    / (n_pos * n_neg))
    return ClassifierReport(accuracy=(tp + tn) / y.size, precision=precision,
                            recall=recall, f1=f1, auc=auc,
                            tp=tp, fp=fp, fn=fn, tn=tn)
