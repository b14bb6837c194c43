"""Experiment runner: spec files, seed sweeps, traces, and summaries.

A spec is a flat JSON object (documented in the README) naming a method,
an objective (a named synthetic benchmark pair, or a search space plus an
external command), budget settings, seeds, and an output directory.
Unknown keys are rejected outright: a typo in a hyperparameter experiment
silently changes what ran, which costs far more than a strict schema.

Each seed produces one trace CSV; a summary CSV aggregates the best-so-far
curves across seeds.  Runs are reproducible from spec plus seeds: reruns
with in-process objectives are byte-identical.
"""

from __future__ import annotations

import csv
import json
import re
import shlex
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .bench import BENCHMARK_NAMES, benchmark_pair
from .space import HyperparameterSpace, Observation, ObservationSet
from .transfer import (HtsSettings, Objective, ObjectiveError, RunTrace,
                       TraceRecord, baseline_linear_transfer,
                       baseline_no_transfer, hts_run, initializer_handoff)

METHODS = ("hts", "no_transfer", "linear_transfer", "hybrid")

_TRANSFER_METHODS = ("hts", "linear_transfer", "hybrid")


class SpecError(ValueError):
    """A malformed experiment spec; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ExternalEvalError(ObjectiveError):
    """Base for failures of an external objective process."""


class ChildExitError(ExternalEvalError):
    """The objective child process exited with a nonzero status."""


class ChildTimeoutError(ExternalEvalError):
    """The objective child process exceeded its timeout."""


class ChildOutputError(ExternalEvalError):
    """The objective child process produced no parseable error line."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a method, an objective, budgets, seeds, output."""

    method: str
    t_max: int
    seeds: tuple[int, ...]
    out_dir: str
    benchmark: str | None = None
    space: HyperparameterSpace | None = None
    objective_command: str | None = None
    timeout_secs: float = 60.0
    source_observations: str | None = None
    m: int | None = None
    r: int = 5
    n_rank_pairs: int = 10_000
    include_random_source: int = 0
    hts_fraction: float = 0.5


_KEY_TYPES = {
    "method": str,
    "benchmark": str,
    "space": list,
    "objective_command": str,
    "timeout_secs": (int, float),
    "source_observations": str,
    "m": int,
    "r": int,
    "t_max": int,
    "n_rank_pairs": int,
    "include_random_source": int,
    "hts_fraction": (int, float),
    "seeds": list,
    "out_dir": str,
}

# Keys that only make sense for particular methods / objective kinds.
_METHOD_KEYS = {
    "source_observations": _TRANSFER_METHODS,
    "m": ("hts", "no_transfer", "hybrid"),
    "r": ("hts", "hybrid"),
    "n_rank_pairs": ("hts", "hybrid"),
    "include_random_source": ("hts", "hybrid"),
    "hts_fraction": ("hybrid",),
}


def _parse_space(raw: list, path: str) -> HyperparameterSpace:
    bounds = []
    for i, entry in enumerate(raw):
        where = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise SpecError(where, "axis must be an object")
        extra = set(entry) - {"name", "min", "max"}
        if extra:
            raise SpecError(where, f"unknown axis keys {sorted(extra)}")
        try:
            bounds.append((str(entry["name"]), float(entry["min"]),
                           float(entry["max"])))
        except KeyError as missing:
            raise SpecError(where, f"missing axis key {missing}") from None
    try:
        return HyperparameterSpace.from_bounds(bounds)
    except ValueError as exc:
        raise SpecError(path, str(exc)) from None


def parse_spec(raw: dict, origin: str = "spec") -> ExperimentSpec:
    """Validate a raw mapping into an :class:`ExperimentSpec`.

    Every check names the field it failed on; unknown keys are errors.
    """
    if not isinstance(raw, dict):
        raise SpecError(origin, "spec must be a JSON object")
    for key, value in raw.items():
        if key not in _KEY_TYPES:
            raise SpecError(f"{origin}.{key}", "unknown key")
        expected = _KEY_TYPES[key]
        if not isinstance(value, expected) or isinstance(value, bool):
            raise SpecError(
                f"{origin}.{key}",
                f"expected {getattr(expected, '__name__', 'number')}, "
                f"got {type(value).__name__}"
            )

    for required in ("method", "t_max", "seeds", "out_dir"):
        if required not in raw:
            raise SpecError(f"{origin}.{required}", "required key missing")

    method = raw["method"]
    if method not in METHODS:
        raise SpecError(f"{origin}.method",
                        f"must be one of {METHODS}, got {method!r}")
    if raw["t_max"] < 1:
        raise SpecError(f"{origin}.t_max", "must be >= 1")

    seeds = raw["seeds"]
    if not seeds:
        raise SpecError(f"{origin}.seeds", "must be non-empty")
    for i, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool):
            raise SpecError(f"{origin}.seeds[{i}]", "seeds must be integers")

    has_benchmark = "benchmark" in raw
    has_external = "space" in raw or "objective_command" in raw
    if has_benchmark and has_external:
        raise SpecError(f"{origin}.benchmark",
                        "give either a benchmark or space+objective_command")
    if not has_benchmark and not has_external:
        raise SpecError(f"{origin}.benchmark",
                        "an objective is required: benchmark, or "
                        "space+objective_command")
    space = None
    if has_benchmark:
        if raw["benchmark"] not in BENCHMARK_NAMES:
            raise SpecError(
                f"{origin}.benchmark",
                f"unknown benchmark {raw['benchmark']!r}; "
                f"choose from {BENCHMARK_NAMES}"
            )
        if "timeout_secs" in raw:
            raise SpecError(f"{origin}.timeout_secs",
                            "only valid with objective_command")
    else:
        if "space" not in raw or "objective_command" not in raw:
            raise SpecError(f"{origin}.space",
                            "space and objective_command go together")
        space = _parse_space(raw["space"], f"{origin}.space")

    for key, allowed in _METHOD_KEYS.items():
        if key in raw and method not in allowed:
            raise SpecError(f"{origin}.{key}",
                            f"only valid for methods {allowed}")
    if method in _TRANSFER_METHODS and "source_observations" not in raw:
        raise SpecError(f"{origin}.source_observations",
                        f"required for method {method!r}")

    if "m" in raw and not raw["m"] <= raw["t_max"]:
        raise SpecError(f"{origin}.m", "must satisfy m <= t_max")
    if "hts_fraction" in raw and not 0.0 < raw["hts_fraction"] <= 1.0:
        raise SpecError(f"{origin}.hts_fraction", "must be in (0, 1]")

    return ExperimentSpec(
        method=method,
        t_max=raw["t_max"],
        seeds=tuple(seeds),
        out_dir=raw["out_dir"],
        benchmark=raw.get("benchmark"),
        space=space,
        objective_command=raw.get("objective_command"),
        timeout_secs=float(raw.get("timeout_secs", 60.0)),
        source_observations=raw.get("source_observations"),
        m=raw.get("m"),
        r=raw.get("r", 5),
        n_rank_pairs=raw.get("n_rank_pairs", 10_000),
        include_random_source=raw.get("include_random_source", 0),
        hts_fraction=float(raw.get("hts_fraction", 0.5)),
    )


def load_spec(path) -> ExperimentSpec:
    """Read and validate a JSON spec file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise SpecError(str(path), f"cannot read spec: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(str(path), f"invalid JSON: {exc}") from None
    return parse_spec(raw, origin=path.name)


def external_objective(command: str, space: HyperparameterSpace,
                       timeout_secs: float = 60.0) -> Objective:
    """Wrap a subprocess command as an objective.

    Per evaluation the command is spawned once; a single JSON line mapping
    axis names to raw values is written to its stdin, and its stdout must
    contain one line of the form ``error: <real>``.  Nonzero exits,
    timeouts, and unparseable output raise distinct errors, none of which
    commit an observation.
    """
    argv = shlex.split(command)
    if not argv:
        raise ValueError("objective command is empty")

    def fn(config: np.ndarray) -> float:
        request = json.dumps(
            {name: float(v) for name, v in zip(space.names, config)}
        )
        try:
            proc = subprocess.run(
                argv, input=request + "\n", capture_output=True,
                text=True, timeout=timeout_secs,
            )
        except subprocess.TimeoutExpired:
            raise ChildTimeoutError(
                f"objective command timed out after {timeout_secs}s: {command}"
            ) from None
        except OSError as exc:
            raise ChildExitError(f"cannot launch {command!r}: {exc}") from None
        if proc.returncode != 0:
            raise ChildExitError(
                f"objective command exited with {proc.returncode}: "
                f"{proc.stderr.strip()[-500:]}"
            )
        for line in proc.stdout.splitlines():
            match = re.fullmatch(r"\s*error:\s*([^\s]+)\s*", line)
            if match:
                try:
                    return float(match.group(1))
                except ValueError:
                    raise ChildOutputError(
                        f"unparseable error value {match.group(1)!r}"
                    ) from None
        raise ChildOutputError(
            f"no 'error: <real>' line in output: {proc.stdout.strip()[-500:]!r}"
        )

    return Objective(fn, space, name=argv[0])


def load_source_observations(path, space: HyperparameterSpace) -> ObservationSet:
    """Load a source set from an observation CSV or a trace CSV.

    Trace CSVs carry eval_index/iteration_label/best_so_far around the same
    axis and error columns, so a previous run's trace can feed the next
    run's transfer directly.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SpecError(str(path), f"cannot read source: {exc}") from None
    if not rows:
        raise SpecError(str(path), "source file is empty")
    header = rows[0]
    plain = space.names + ["error"]
    traced = ["eval_index", "iteration_label"] + space.names \
        + ["error", "best_so_far"]
    if header == plain:
        lo, hi = 0, len(space.names) + 1
    elif header == traced:
        lo, hi = 2, 2 + len(space.names) + 1
    else:
        raise SpecError(
            str(path),
            f"header {header} matches neither the observation format "
            f"{plain} nor the trace format {traced}"
        )
    observations = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            values = [float(v) for v in row[lo:hi]]
        except ValueError as exc:
            raise SpecError(f"{path}:{i}", str(exc)) from None
        observations.append(Observation(np.array(values[:-1]), values[-1]))
    try:
        return ObservationSet(space, observations)
    except ValueError as exc:
        raise SpecError(str(path), str(exc)) from None


def _resolve_m(spec: ExperimentSpec, k: int) -> int:
    return spec.m if spec.m is not None else max(2 * k, k + 2)


def _run_one_seed(spec: ExperimentSpec, f_t: Objective,
                  source: ObservationSet | None, seed: int) -> RunTrace:
    k = f_t.space.k
    if spec.method == "no_transfer":
        return baseline_no_transfer(f_t, _resolve_m(spec, k), spec.t_max,
                                    seed=seed)
    if spec.method == "linear_transfer":
        return baseline_linear_transfer(source, f_t, spec.t_max)
    settings = HtsSettings(
        t_max=spec.t_max, m=spec.m, r=spec.r,
        n_rank_pairs=spec.n_rank_pairs,
        include_random_source=spec.include_random_source, seed=seed,
    )
    if spec.method == "hts":
        return hts_run(source, f_t, settings)

    # hybrid: transfer for a fraction of the budget, then surrogate search.
    t_hts = int(spec.t_max * spec.hts_fraction)
    m = _resolve_m(spec, k)
    if t_hts < m:
        raise SpecError("spec.hts_fraction",
                        f"transfer phase budget {t_hts} cannot cover m = {m}")
    first = hts_run(source, f_t, replace(settings, t_max=t_hts))
    remaining = spec.t_max - len(first)
    if remaining == 0:
        return first
    continuation_seed = int(np.random.SeedSequence([seed, 1])
                            .generate_state(1)[0])
    second = baseline_no_transfer(
        f_t, m=0, t_max=remaining, seed=continuation_seed,
        init=initializer_handoff(first),
    )
    merged = list(first.records)
    offset = len(first)
    for rec in second.records:
        merged.append(TraceRecord(
            eval_index=offset + rec.eval_index, label=rec.label,
            config=rec.config, error=rec.error,
            best_so_far=rec.best_so_far,
        ))
    return RunTrace(tuple(merged), second.observations, first.mapper)


@dataclass(frozen=True)
class ExperimentSummary:
    """Result of a seed sweep: where the files went, plus the curves."""

    method: str
    seeds: tuple[int, ...]
    trace_paths: tuple[Path, ...]
    summary_path: Path
    eval_index: np.ndarray
    mean_best: np.ndarray
    min_best: np.ndarray
    max_best: np.ndarray


def run_experiment(spec: ExperimentSpec) -> ExperimentSummary:
    """Run the spec's method once per seed and persist traces + summary.

    On an objective failure the partial trace of the failing seed is still
    written before the error propagates.
    """
    if spec.benchmark is not None:
        space = benchmark_pair(spec.benchmark)[1].space
    else:
        space = spec.space

    source = None
    if spec.method in _TRANSFER_METHODS:
        source = load_source_observations(spec.source_observations, space)

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    traces: list[RunTrace] = []
    trace_paths: list[Path] = []
    for seed in spec.seeds:
        if spec.benchmark is not None:
            f_t = benchmark_pair(spec.benchmark)[1]
        else:
            f_t = external_objective(spec.objective_command, space,
                                     spec.timeout_secs)
        trace_path = out_dir / f"trace_seed{seed}.csv"
        try:
            trace = _run_one_seed(spec, f_t, source, seed)
        except ObjectiveError as exc:
            if exc.trace is not None:
                exc.trace.to_csv(trace_path)
            raise
        trace.to_csv(trace_path)
        traces.append(trace)
        trace_paths.append(trace_path)

    length = min(len(t) for t in traces)
    curves = np.vstack([t.best_curve[:length] for t in traces])
    eval_index = np.arange(1, length + 1)
    mean_best = curves.mean(axis=0)
    min_best = curves.min(axis=0)
    max_best = curves.max(axis=0)

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval_index", "mean_best_error",
                         "min_best_error", "max_best_error"])
        for i in range(length):
            writer.writerow([int(eval_index[i]), repr(float(mean_best[i])),
                             repr(float(min_best[i])),
                             repr(float(max_best[i]))])

    return ExperimentSummary(
        method=spec.method, seeds=spec.seeds,
        trace_paths=tuple(trace_paths), summary_path=summary_path,
        eval_index=eval_index, mean_best=mean_best,
        min_best=min_best, max_best=max_best,
    )
