"""The surrogate-aligned transfer loop, its baselines, and run traces.

All three search procedures drive a common :class:`Objective` contract and
share strict budget accounting: every objective invocation appends exactly
one trace record, best-so-far curves are non-increasing, and identical
seeds reproduce identical traces bit for bit.

The transfer loop alternates between refitting the target surrogate on
everything observed so far, retraining the transfer function g on freshly
rank-paired samples, and spending r evaluations on the images of the
best-performing source configs under g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import mapper as mapper_mod
from .mapper import MapperNetwork, TrainSettings
from .sampling import latin_hypercube
from .space import (DELTA_DUP, HyperparameterSpace, Observation,
                    ObservationSet)
from .surrogate import RbfSurrogate, SurrogateFitError

_FALLBACK_ATTEMPTS = 16


class ObjectiveError(RuntimeError):
    """An objective evaluation failed; ``trace`` holds the partial run."""

    def __init__(self, message: str, trace: RunTrace | None = None):
        super().__init__(message)
        self.trace = trace


class Objective:
    """An expensive error function over one space.

    Calling an instance with a raw config returns a finite error value and
    counts one unit against the evaluation budget (``calls``).  Non-finite
    results abort the evaluation with :class:`ObjectiveError`.
    """

    def __init__(self, fn: Callable[[np.ndarray], float],
                 space: HyperparameterSpace, name: str = ""):
        self.fn = fn
        self.space = space
        self.name = name
        self.calls = 0

    def __call__(self, config: np.ndarray) -> float:
        config = self.space.validate_config(config)
        self.calls += 1
        value = float(self.fn(config))
        if not math.isfinite(value):
            raise ObjectiveError(
                f"objective {self.name or 'f'} returned non-finite value "
                f"{value} at {config}"
            )
        return value


@dataclass(frozen=True)
class TraceRecord:
    """One committed evaluation: 1-based index, phase label, raw config."""

    eval_index: int
    label: str
    config: np.ndarray
    error: float
    best_so_far: float


@dataclass(frozen=True)
class RunTrace:
    """Complete record of one optimization run.

    ``observations`` is the final target observation set (for continuation
    runs it also contains the seeded initial design, so it can be larger
    than ``records``).  ``mapper`` is the last trained transfer function,
    or None for runs that never train one.
    """

    records: tuple[TraceRecord, ...]
    observations: ObservationSet
    mapper: MapperNetwork | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def errors(self) -> np.ndarray:
        return np.array([rec.error for rec in self.records])

    @property
    def best_curve(self) -> np.ndarray:
        """Best-so-far error per evaluation index; non-increasing."""
        return np.array([rec.best_so_far for rec in self.records])

    def final_best(self) -> float:
        if not self.records:
            raise ValueError("empty trace has no best error")
        return self.records[-1].best_so_far

    def to_csv(self, path) -> None:
        """Columns: eval_index, iteration_label, one column per axis (raw
        units), error, best_so_far."""
        import csv

        names = self.observations.space.names
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eval_index", "iteration_label"] + names
                            + ["error", "best_so_far"])
            for rec in self.records:
                writer.writerow(
                    [rec.eval_index, rec.label]
                    + [repr(float(v)) for v in rec.config]
                    + [repr(rec.error), repr(rec.best_so_far)]
                )


class _Run:
    """Mutable budget ledger used while a run is in flight."""

    def __init__(self, objective: Objective,
                 init: ObservationSet | None = None):
        self.objective = objective
        self.records: list[TraceRecord] = []
        self.omega = init if init is not None \
            else ObservationSet(objective.space)
        self.best = self.omega.min_error() if len(self.omega) else math.inf

    def evaluate(self, config: np.ndarray, label: str) -> float:
        try:
            error = self.objective(config)
        except ObjectiveError as exc:
            if exc.trace is None:
                exc.trace = self.trace()
            raise
        self.omega = self.omega.add(Observation(config, error))
        self.best = min(self.best, error)
        self.records.append(TraceRecord(
            eval_index=len(self.records) + 1, label=label,
            config=np.asarray(config, dtype=float), error=error,
            best_so_far=self.best,
        ))
        return error

    def trace(self, mapper: MapperNetwork | None = None) -> RunTrace:
        return RunTrace(tuple(self.records), self.omega, mapper)


@dataclass(frozen=True)
class HtsSettings:
    """Meta-parameters of the transfer loop.

    m defaults to twice the axis count (floored at k + 2, the surrogate's
    minimum); r = 5 is the per-round transfer step-size.  ``train`` carries
    the mapper optimizer knobs; its seed field is replaced with a
    per-iteration stream derived from ``seed``.
    """

    t_max: int
    m: int | None = None
    r: int = 5
    n_rank_pairs: int = 10_000
    include_random_source: int = 0
    train: TrainSettings = TrainSettings()
    seed: int = 0

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.n_rank_pairs < 2:
            raise ValueError("n_rank_pairs must be >= 2")
        if self.include_random_source < 0:
            raise ValueError("include_random_source must be >= 0")

    def resolve_m(self, k: int) -> int:
        m = max(2 * k, k + 2) if self.m is None else self.m
        if not k + 2 <= m <= self.t_max:
            raise ValueError(
                f"m = {m} must satisfy k + 2 = {k + 2} <= m <= t_max = "
                f"{self.t_max}"
            )
        return m


@dataclass(frozen=True)
class MappedConfig:
    """A config proposed for evaluation, tagged with how it was produced."""

    config: np.ndarray
    origin: str  # "mapped", "random-source", or "lhs-fallback"


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def map_top_r(
    g: MapperNetwork | Callable[[np.ndarray], np.ndarray],
    omega_s: ObservationSet,
    omega_t: ObservationSet,
    r: int,
    rng: np.random.Generator | None = None,
    extra_random: int = 0,
) -> list[MappedConfig]:
    """Image, under g, of the r best source configs, deduplicated.

    Walks the source set in ascending-error order and maps each config
    through g.  A mapped config that lands within DELTA_DUP (unit distance)
    of anything already in the target set, or of a config already selected
    this round, is skipped and the walk advances to the next-ranked source.
    ``extra_random`` additional source configs, picked uniformly from the
    not-yet-tried remainder, are mapped the same way.  If the source set
    runs out before the batch is full, fresh Latin hypercube points fill
    the remainder; every returned config is tagged with its origin.

    ``g`` may be any unit-to-unit callable; tests use the identity.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if len(omega_s) < r:
        raise ValueError(f"source set of {len(omega_s)} cannot supply top {r}")
    if rng is None:
        rng = np.random.default_rng(0)
    space = omega_s.space
    apply_g = g.forward if isinstance(g, MapperNetwork) else g

    taken_units: list[np.ndarray] = [u for u in omega_t.units]
    selected: list[MappedConfig] = []

    def accept(unit: np.ndarray, origin: str) -> bool:
        if taken_units:
            dist = np.linalg.norm(np.vstack(taken_units) - unit, axis=1)
            if dist.min() < DELTA_DUP:
                return False
        taken_units.append(unit)
        selected.append(MappedConfig(space.denormalize(unit), origin))
        return True

    order = np.argsort(omega_s.errors, kind="stable")
    tried: set[int] = set()
    for idx in order:
        if sum(s.origin == "mapped" for s in selected) == r:
            break
        tried.add(int(idx))
        unit = apply_g(space.normalize(omega_s[int(idx)].config))
        accept(np.asarray(unit, dtype=float), "mapped")

    if extra_random > 0:
        untried = [int(i) for i in order if int(i) not in tried]
        n_random = 0
        for idx in rng.permutation(untried) if untried else []:
            if n_random == extra_random:
                break
            unit = apply_g(space.normalize(omega_s[int(idx)].config))
            if accept(np.asarray(unit, dtype=float), "random-source"):
                n_random += 1

    want = r + extra_random
    attempts = 0
    while len(selected) < want:
        if attempts >= _FALLBACK_ATTEMPTS:
            raise RuntimeError(
                "could not place fallback points at the required separation"
            )
        attempts += 1
        for unit in latin_hypercube(want - len(selected), space.k, rng):
            accept(unit, "lhs-fallback")
    return selected


def hts_run(omega_s: ObservationSet, f_t: Objective,
            settings: HtsSettings) -> RunTrace:
    """Run the full transfer loop against the target objective.

    Fits the source surrogate once, seeds the target set with m Latin
    hypercube evaluations, then repeats while another full round fits in
    the budget: refit the target surrogate, rank-pair fresh samples, train
    g, and evaluate the mapped best source configs on the target.  The
    budget t_max is a hard cap: a round that would overshoot it never
    starts, so the trace holds exactly m + (r + extras) * rounds records.
    """
    space = f_t.space
    if omega_s.space != space:
        raise ValueError("source observations live on a different space")
    k = space.k
    if len(omega_s) < k + 2:
        raise ValueError(
            f"need at least k + 2 = {k + 2} source observations, "
            f"got {len(omega_s)}"
        )
    m = settings.resolve_m(k)

    root = np.random.SeedSequence(settings.seed)
    surr_s = RbfSurrogate.fit(omega_s)
    run = _Run(f_t)
    (init_seed,) = root.spawn(1)
    for unit in latin_hypercube(m, k, np.random.default_rng(init_seed)):
        run.evaluate(space.denormalize(unit), "init")

    t = m
    batch = settings.r + settings.include_random_source
    g: MapperNetwork | None = None
    round_no = 0
    while t + batch <= settings.t_max:
        round_no += 1
        pair_seed, train_seed, map_seed = root.spawn(3)
        try:
            surr_t = RbfSurrogate.fit(run.omega)
        except SurrogateFitError as exc:
            raise SurrogateFitError(f"round {round_no}: {exc}") from exc
        data = mapper_mod.build_rank_pairs(
            surr_s, surr_t, settings.n_rank_pairs, pair_seed
        )
        g = mapper_mod.train(
            data, replace(settings.train, seed=_seed_int(train_seed))
        )
        proposals = map_top_r(
            g, omega_s, run.omega, settings.r,
            rng=np.random.default_rng(map_seed),
            extra_random=settings.include_random_source,
        )
        for prop in proposals:
            suffix = "" if prop.origin == "mapped" else f"-{prop.origin}"
            run.evaluate(prop.config, f"round-{round_no}{suffix}")
        t += batch
    return run.trace(mapper=g)


def baseline_no_transfer(
    f_t: Objective,
    m: int,
    t_max: int,
    seed: int = 0,
    init: ObservationSet | None = None,
) -> RunTrace:
    """Surrogate search on the target alone, without any transfer.

    Seeds with m Latin hypercube evaluations (or with ``init``, in which
    case all t_max evaluations go to search steps), then repeatedly fits
    the target surrogate and evaluates the candidate minimizing it.
    Candidates mix Gaussian perturbations of the incumbent best (decaying
    radius) with uniform samples, subject to DELTA_DUP separation from
    everything already evaluated.
    """
    space = f_t.space
    k = space.k
    root = np.random.SeedSequence(seed)
    (init_seed, search_seed) = root.spawn(2)

    if init is not None:
        if len(init) < k + 2:
            raise ValueError(
                f"initial design needs at least k + 2 = {k + 2} points"
            )
        run = _Run(f_t, init=init)
        t = 0
    else:
        if m < k + 2:
            raise ValueError(f"m must be >= k + 2 = {k + 2}, got {m}")
        if t_max < m:
            raise ValueError(f"t_max = {t_max} smaller than m = {m}")
        run = _Run(f_t)
        for unit in latin_hypercube(m, k, np.random.default_rng(init_seed)):
            run.evaluate(space.denormalize(unit), "init")
        t = m

    rng = np.random.default_rng(search_seed)
    sigma = 0.2
    stale = 0
    n_cand = 100 * k
    n_gauss = int(round(0.8 * n_cand))
    while t < t_max:
        surr = RbfSurrogate.fit(run.omega)
        units = run.omega.units
        incumbent = units[int(np.argmin(run.omega.errors))]
        cands = np.vstack([
            np.clip(incumbent + rng.normal(0.0, sigma, size=(n_gauss, k)),
                    0.0, 1.0),
            rng.random((n_cand - n_gauss, k)),
        ])
        pred = surr.predict_batch(cands)
        too_close = cdist(cands, units).min(axis=1) < DELTA_DUP
        pred[too_close] = np.inf
        while not np.isfinite(pred).any():  # pragma: no cover - degenerate
            cands = rng.random((n_cand, k))
            pred = surr.predict_batch(cands)
            pred[cdist(cands, units).min(axis=1) < DELTA_DUP] = np.inf
        choice = cands[int(np.argmin(pred))]

        before = run.best
        run.evaluate(space.denormalize(choice), "search")
        if run.best < before:
            stale = 0
        else:
            stale += 1
            if stale >= 3:
                sigma = max(sigma / 2.0, 0.005)
                stale = 0
        t += 1
    return run.trace()


def baseline_linear_transfer(omega_s: ObservationSet, f_t: Objective,
                             t_max: int) -> RunTrace:
    """Evaluate the t_max best source configs on the target, unmapped.

    Walks the source set in ascending source-error order; no adaptation of
    any kind is applied to the configs.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if len(omega_s) < t_max:
        raise ValueError(
            f"source set of {len(omega_s)} cannot cover budget {t_max}"
        )
    if omega_s.space != f_t.space:
        raise ValueError("source observations live on a different space")
    run = _Run(f_t)
    for obs in omega_s.best(t_max):
        run.evaluate(obs.config, "linear")
    return run.trace()


def initializer_handoff(trace: RunTrace) -> ObservationSet:
    """Extract the final target observations for use as an initial design.

    Feeding the result to :func:`baseline_no_transfer` (``init=``) turns the
    transfer loop into an initialization method: spend part of the budget on
    transfer, then continue with plain surrogate search.
    """
    if len(trace.records) == 0:
        raise ValueError("cannot hand off an empty trace")
    return trace.observations
