"""Constrained grid search over (patch_size, batch_size, learning_rate, resnet_blocks).

Every Cartesian setting is trained for the training budget, its per-frame
inference time is measured, settings over the inference budget are marked
constraint-violated, and survivors are evaluated against the reference
stylizations.  Results append to a JSON-lines file immediately, one line
per setting, so an interrupted run resumes by skipping settings already on
disk.  Per-setting seeds derive from the setting itself, which makes the
final result set independent of completion order.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

from .data import Keyframe
from .errors import ConfigError, EmptyInputError
from .inference import measure_inference_seconds
from .losses import LossBreakdown
from .training import SUPPORTED_RANGES, EvalPair, TrainConfig, evaluate, train

AXIS_NAMES = ("patch_size", "batch_size", "learning_rate", "resnet_blocks")
STATUS_OK = "ok"
STATUS_VIOLATED = "constraint-violated"
STATUS_FAILED = "failed"

DEFAULT_TRAIN_BUDGET_SECONDS = 30.0
DEFAULT_INFERENCE_BUDGET_SECONDS = 0.06


@dataclass
class SearchSpec:
    """Grid axes, budgets, data, and harness knobs for one search."""

    axes: dict[str, list]
    keyframes: list[Keyframe] | None = None
    eval_pairs: list[EvalPair] | None = None
    train_budget_seconds: float = DEFAULT_TRAIN_BUDGET_SECONDS
    inference_budget_seconds: float = DEFAULT_INFERENCE_BUDGET_SECONDS
    train_budget_steps: int | None = None  # test mode: steps instead of seconds
    workers: int = 1
    results_path: str | Path = "results.jsonl"
    seed: int = 0
    allow_extended_ranges: bool = False
    base_config: TrainConfig | None = None
    timing_size: tuple[int, int] | None = None
    timing_runs: int = 10
    timing_warmup: int = 2

    def __post_init__(self):
        unknown = set(self.axes) - set(AXIS_NAMES)
        if unknown:
            raise ConfigError(f"unknown axes: {sorted(unknown)}")
        missing = [name for name in AXIS_NAMES if not self.axes.get(name)]
        if missing:
            raise EmptyInputError(f"empty axes: {missing}")
        if self.train_budget_seconds <= 0 or self.inference_budget_seconds <= 0:
            raise ConfigError("budgets must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.allow_extended_ranges:
            for name, (lo, hi) in SUPPORTED_RANGES.items():
                bad = [v for v in self.axes[name] if not lo <= v <= hi]
                if bad:
                    raise ConfigError(
                        f"axis {name} values {bad} outside the supported interval [{lo}, {hi}]"
                    )

    def settings(self) -> list[dict]:
        """Cartesian product in canonical axis order."""
        values = [self.axes[name] for name in AXIS_NAMES]
        return [dict(zip(AXIS_NAMES, combo)) for combo in product(*values)]


@dataclass
class SearchResult:
    setting: dict
    status: str
    loss: LossBreakdown | None = None
    inference_seconds: float | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "setting": self.setting,
            "status": self.status,
            "loss": self.loss.to_json_dict() if self.loss is not None else None,
            "inference_seconds": self.inference_seconds,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "SearchResult":
        loss = payload.get("loss")
        return cls(
            setting=payload["setting"],
            status=payload["status"],
            loss=LossBreakdown.from_json_dict(loss) if loss else None,
            inference_seconds=payload.get("inference_seconds"),
            error=payload.get("error"),
        )


def setting_key(setting: dict) -> tuple:
    return tuple(setting[name] for name in AXIS_NAMES)


def setting_seed(setting: dict, base_seed: int) -> int:
    canonical = json.dumps([setting[name] for name in AXIS_NAMES])
    return (base_seed + zlib.crc32(canonical.encode())) % (2**31)


def load_results(path: str | Path) -> list[SearchResult]:
    """Reads a results file, tolerating a truncated trailing line."""
    path = Path(path)
    if not path.exists():
        return []
    results = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                results.append(SearchResult.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                continue  # partial write from an interrupted run
    return results


def _default_trainer(setting: dict, spec: SearchSpec):
    config = spec.base_config or TrainConfig(budget_steps=0)
    overrides = dict(setting)
    if spec.train_budget_steps is not None:
        overrides.update(budget_steps=spec.train_budget_steps, budget_seconds=None)
    else:
        overrides.update(budget_steps=None, budget_seconds=spec.train_budget_seconds)
    overrides.update(
        seed=setting_seed(setting, spec.seed),
        allow_extended_ranges=spec.allow_extended_ranges,
    )
    config = replace(config, **overrides)
    checkpoint = train(spec.keyframes, config)
    if spec.timing_size is not None:
        size = spec.timing_size
    else:
        first = spec.eval_pairs[0].input
        size = (first.width, first.height)
    seconds = measure_inference_seconds(
        checkpoint, size, runs=spec.timing_runs, warmup=spec.timing_warmup
    )
    return checkpoint, seconds


def _default_evaluator(artifact, setting: dict, spec: SearchSpec) -> LossBreakdown:
    return evaluate(artifact, spec.eval_pairs)


def _run_setting(setting: dict, spec: SearchSpec, trainer, evaluator) -> SearchResult:
    try:
        artifact, seconds = trainer(setting, spec)
        if seconds > spec.inference_budget_seconds:
            return SearchResult(setting, STATUS_VIOLATED, inference_seconds=seconds)
        loss = evaluator(artifact, setting, spec)
        return SearchResult(setting, STATUS_OK, loss=loss, inference_seconds=seconds)
    except Exception as exc:  # noqa: BLE001 - a failed trial must not kill the sweep
        return SearchResult(setting, STATUS_FAILED, error=f"{type(exc).__name__}: {exc}")


def rank_results(results: list[SearchResult]) -> list[SearchResult]:
    """ok results ascending by total loss (ties: lexicographic setting), rest after."""
    ok = [r for r in results if r.status == STATUS_OK]
    rest = [r for r in results if r.status != STATUS_OK]
    ok.sort(key=lambda r: (r.loss.total, setting_key(r.setting)))
    rest.sort(key=lambda r: setting_key(r.setting))
    return ok + rest


def run_grid_search(spec: SearchSpec, trainer=None, evaluator=None) -> list[SearchResult]:
    """Runs (or resumes) the grid search; returns all results ranked.

    ``trainer(setting, spec) -> (artifact, inference_seconds)`` and
    ``evaluator(artifact, setting, spec) -> LossBreakdown`` are injectable
    for surrogate tests; the defaults train and evaluate for real.
    """
    trainer = trainer or _default_trainer
    evaluator = evaluator or _default_evaluator
    if trainer is _default_trainer and (not spec.keyframes or not spec.eval_pairs):
        raise EmptyInputError("grid search needs keyframes and eval pairs")

    results_path = Path(spec.results_path)
    results_path.parent.mkdir(parents=True, exist_ok=True)
    existing = load_results(results_path)
    done = {setting_key(r.setting) for r in existing}
    pending = [s for s in spec.settings() if setting_key(s) not in done]

    results = list(existing)
    with open(results_path, "a") as sink:

        def record(result: SearchResult) -> None:
            sink.write(json.dumps(result.to_json_dict()) + "\n")
            sink.flush()
            results.append(result)

        if spec.workers == 1 or not pending:
            for setting in pending:
                record(_run_setting(setting, spec, trainer, evaluator))
        else:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                futures = [
                    pool.submit(_run_setting, setting, spec, trainer, evaluator)
                    for setting in pending
                ]
                for future in futures:
                    record(future.result())

    return rank_results(results)


def summarize(results: list[SearchResult], axis: str) -> list[tuple]:
    """Marginal curve rows (value, min_loss, mean_loss, count) over ok results."""
    if axis not in AXIS_NAMES:
        raise ConfigError(f"unknown axis {axis!r}")
    ok = [r for r in results if r.status == STATUS_OK]
    buckets: dict = {}
    for result in ok:
        buckets.setdefault(result.setting[axis], []).append(result.loss.total)
    rows = []
    for value in sorted(buckets):
        losses = buckets[value]
        rows.append((value, min(losses), sum(losses) / len(losses), len(losses)))
    return rows


def write_summaries(results: list[SearchResult], directory: str | Path) -> list[Path]:
    """One CSV per axis with columns value,min_loss,mean_loss,count."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for axis in AXIS_NAMES:
        rows = summarize(results, axis)
        path = directory / f"{axis}.csv"
        with open(path, "w") as handle:
            handle.write("value,min_loss,mean_loss,count\n")
            for value, min_loss, mean_loss, count in rows:
                handle.write(f"{value},{min_loss},{mean_loss},{count}\n")
        paths.append(path)
    return paths
