"""Entropy-guided adaptive decoding for autoregressive language models.

The package watches next-token entropy while decoding; steps whose entropy
clears a learned threshold pause, rerank the top candidates by short greedy
lookahead rollouts, and emit the best-scoring candidate. Baseline decoders,
a threshold-learning pipeline, analysis tooling, and an execution-based
Pass@1 harness ship alongside the core loop.
"""

from .analysis import (DriftCandidate, GroupStats, SweepPoint,
                       drift_candidates, entropy_summary, midranks, spearman,
                       sweep, write_sweep_csv)
from .decoding import (ALWAYS_PAUSE, NEVER_PAUSE, BasePolicy, DecodeConfig,
                       GenerationResult, StepRecord, Trajectory,
                       decode_adaptive, decode_beam, decode_greedy,
                       decode_line_temperature, decode_sampling, format_tau,
                       generate, lookahead_score, parse_tau, write_step_log)
from .errors import (BackendError, ContextLimitError, DataError, EngineError,
                     FitQualityError, InconsistencyError)
from .harness import (EvalReport, Problem, ProblemResult, load_dataset,
                      render_program, resolve_tau, run_eval, sweep_lookahead,
                      sweep_tau_offsets, write_sweep_reports)
from .lm import (LanguageModel, ProbStep, Session, TableMockModel,
                 load_mock_file, make_table_mock, mock_from_json)
from .remote import BRIDGE_URL_ENV, RemoteModel
from .signals import (UncertaintySignal, entropy, measure, prob_diff, rank_of,
                      top_candidates)
from .threshold import (ClassifierReport, LogisticFit, StepTrace,
                        ThresholdModel, balance, collect, evaluate_classifier,
                        fit_logistic, read_traces, select_threshold,
                        tau_for_cutoff, write_traces)

__version__ = "0.1.0"
