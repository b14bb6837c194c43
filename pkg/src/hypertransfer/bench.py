"""Synthetic source/target objective pairs with controllable domain shift.

Real transfer experiments pair two expensive training tasks; at desk scale
we pair a test function with a distorted copy of itself.  The distortion
(:class:`ShiftSpec`) permutes and remaps the inputs inside the box and
warps the output scale monotonically, so the target has a different
optimal location and a different error scale while preserving the rank
structure that transfer is supposed to exploit.

Input transforms act on unit-normalized coordinates; that keeps coordinate
permutations legal for boxes whose axes have unequal ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .space import HyperparameterSpace
from .transfer import Objective

_MIN_CHECK_TOL = 1e-6


def cnn_tuning_space() -> HyperparameterSpace:
    """The 8-axis space of a small image classifier's training knobs:
    SGD learning rate and momentum, four dropout rates, and the node
    counts of two fully-connected layers."""
    return HyperparameterSpace.from_bounds([
        ("learning_rate", 0.01, 0.40),
        ("momentum", 0.60, 0.99),
        ("dropout_1", 0.00, 0.80),
        ("dropout_2", 0.00, 0.80),
        ("dropout_3", 0.00, 0.80),
        ("dropout_4", 0.00, 0.80),
        ("fc_nodes_1", 100.0, 500.0),
        ("fc_nodes_2", 100.0, 500.0),
    ])


@dataclass(frozen=True)
class TestFunction:
    """A cheap stand-in objective with known minima.

    The recorded minimum is validated at construction: evaluating any
    listed minimizer must reproduce ``fmin`` within 1e-6.
    """

    name: str
    space: HyperparameterSpace
    fn: Callable[[np.ndarray], float]
    minimizers: tuple[np.ndarray, ...]
    fmin: float

    def __post_init__(self):
        minimizers = tuple(
            np.asarray(m, dtype=float) for m in self.minimizers
        )
        object.__setattr__(self, "minimizers", minimizers)
        for xm in minimizers:
            self.space.validate_config(xm)
            value = float(self.fn(xm))
            if abs(value - self.fmin) > _MIN_CHECK_TOL:
                raise ValueError(
                    f"{self.name}: f({xm}) = {value} differs from recorded "
                    f"minimum {self.fmin} by more than {_MIN_CHECK_TOL}"
                )

    @property
    def k(self) -> int:
        return self.space.k

    def __call__(self, config: np.ndarray) -> float:
        return float(self.fn(config))


def _branin_value(x: np.ndarray) -> float:
    x1, x2 = x
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    return float(
        (x2 - b * x1**2 + c * x1 - 6.0) ** 2
        + 10.0 * (1.0 - 1.0 / (8.0 * np.pi)) * np.cos(x1)
        + 10.0
    )


def branin() -> TestFunction:
    """Branin over [-5, 10] x [0, 15]; three global minima of 5/(4 pi)."""
    return TestFunction(
        name="branin",
        space=HyperparameterSpace.from_bounds([("x1", -5.0, 10.0),
                                               ("x2", 0.0, 15.0)]),
        fn=_branin_value,
        minimizers=(
            np.array([-np.pi, 12.275]),
            np.array([np.pi, 2.275]),
            np.array([3.0 * np.pi, 2.475]),
        ),
        fmin=5.0 / (4.0 * np.pi),
    )


_HARTMANN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_HARTMANN6_P = 1e-4 * np.array([
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
])


def _hartmann6_value(x: np.ndarray) -> float:
    inner = np.sum(_HARTMANN6_A * (x - _HARTMANN6_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN6_ALPHA * np.exp(-inner)))


def hartmann6() -> TestFunction:
    """Hartmann-6 over [0, 1]^6; minimum refined by multi-start search."""
    return TestFunction(
        name="hartmann6",
        space=HyperparameterSpace.from_bounds(
            [(f"x{i + 1}", 0.0, 1.0) for i in range(6)]
        ),
        fn=_hartmann6_value,
        minimizers=(
            np.array([0.201689511540822, 0.1500106933494476,
                      0.47687397471160164, 0.2753324300601305,
                      0.31165161790065354, 0.6573005345887895]),
        ),
        fmin=-3.322368011415515,
    )


def _rosenbrock_value(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2
                        + (1.0 - x[:-1]) ** 2))


def rosenbrock8() -> TestFunction:
    """Rosenbrock in 8 dimensions restricted to the unit box; the global
    minimizer (1, ..., 1) sits on the box corner with value 0."""
    return TestFunction(
        name="rosenbrock8",
        space=HyperparameterSpace.from_bounds(
            [(f"x{i + 1}", 0.0, 1.0) for i in range(8)]
        ),
        fn=_rosenbrock_value,
        minimizers=(np.ones(8),),
        fmin=0.0,
    )


_BOWL_CENTER = np.array([0.62, 0.38, 0.81, 0.27, 0.55, 0.18, 0.44, 0.70])
_BOWL_WEIGHTS = np.array([1.0, 1.5, 0.5, 2.0, 1.0, 0.75, 1.25, 0.6])


def quadratic_bowl8() -> TestFunction:
    """Anisotropic quadratic bowl over the 8-axis tuning space; minimum 0
    at a fixed interior point."""
    space = cnn_tuning_space()

    def bowl(x: np.ndarray) -> float:
        u = space.normalize(np.asarray(x, dtype=float))
        return float(np.sum(_BOWL_WEIGHTS * (u - _BOWL_CENTER) ** 2))

    return TestFunction(
        name="bowl8",
        space=space,
        fn=bowl,
        minimizers=(space.denormalize(_BOWL_CENTER),),
        fmin=0.0,
    )


@dataclass(frozen=True)
class OutputWarp:
    """Strictly increasing scalar transform of objective values.

    kind "affine" is y -> scale * y + offset; kind "cubic" is
    y -> scale * y^3 + offset.  scale must be positive for either to be
    strictly increasing.
    """

    kind: str = "affine"
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("affine", "cubic"):
            raise ValueError(f"unknown output warp kind {self.kind!r}")
        if self.scale <= 0.0:
            raise ValueError("output warp scale must be positive")

    def __call__(self, y: float) -> float:
        if self.kind == "cubic":
            return self.scale * float(y) ** 3 + self.offset
        return self.scale * float(y) + self.offset


@dataclass(frozen=True)
class ShiftSpec:
    """Domain shift between a source task and its synthetic target.

    The input transform acts on unit coordinates: permute axes, then apply
    an invertible affine map ``matrix @ u + offset`` that must keep the
    unit cube inside itself.  The output warp rescales error values
    monotonically, so source and target agree on the ranking of any fixed
    set of points while disagreeing on scale.
    """

    k: int
    permutation: tuple[int, ...] | None = None
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    output: OutputWarp = OutputWarp()

    def __post_init__(self):
        if self.permutation is not None:
            perm = tuple(int(i) for i in self.permutation)
            if sorted(perm) != list(range(self.k)):
                raise ValueError(
                    f"permutation {perm} is not a permutation of 0..{self.k - 1}"
                )
            object.__setattr__(self, "permutation", perm)
        matrix = np.eye(self.k) if self.matrix is None \
            else np.asarray(self.matrix, dtype=float)
        offset = np.zeros(self.k) if self.offset is None \
            else np.asarray(self.offset, dtype=float)
        if matrix.shape != (self.k, self.k):
            raise ValueError(f"matrix must be ({self.k}, {self.k})")
        if offset.shape != (self.k,):
            raise ValueError(f"offset must have length {self.k}")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

        composite = self._composite()
        if abs(np.linalg.det(composite)) < 1e-12:
            raise ValueError("input transform must be invertible")
        # Interval arithmetic: exact range of an affine image of the cube.
        lo = self.offset + np.minimum(composite, 0.0).sum(axis=1)
        hi = self.offset + np.maximum(composite, 0.0).sum(axis=1)
        if (lo < -1e-12).any() or (hi > 1.0 + 1e-12).any():
            raise ValueError(
                f"input transform escapes the unit box: image spans "
                f"[{lo.min():.4g}, {hi.max():.4g}]"
            )

    def _composite(self) -> np.ndarray:
        """Matrix of the permutation-then-affine map as one linear map."""
        if self.permutation is None:
            return self.matrix
        return self.matrix @ np.eye(self.k)[list(self.permutation)]

    def apply_unit(self, unit: np.ndarray) -> np.ndarray:
        unit = np.asarray(unit, dtype=float)
        if self.permutation is not None:
            unit = unit[list(self.permutation)]
        return self.matrix @ unit + self.offset

    def invert_unit(self, image: np.ndarray) -> np.ndarray:
        """Preimage of a unit point under the input transform."""
        image = np.asarray(image, dtype=float)
        return np.linalg.solve(self._composite(), image - self.offset)

    @classmethod
    def identity(cls, k: int) -> ShiftSpec:
        return cls(k=k)


def make_pair(f: TestFunction, shift: ShiftSpec) -> tuple[Objective, Objective]:
    """Build (source, target) objectives from a test function and a shift.

    The source is f itself; the target evaluates
    ``output(f(denorm(input_transform(norm(x)))))``.  The two objectives
    count their evaluation budgets independently.
    """
    if shift.k != f.k:
        raise ValueError(f"shift is {shift.k}-dimensional, function is {f.k}")
    space = f.space

    def target_fn(config: np.ndarray) -> float:
        unit = space.normalize(np.asarray(config, dtype=float))
        moved = shift.apply_unit(unit)
        return shift.output(f(space.denormalize(moved)))

    source = Objective(f, space, name=f.name)
    target = Objective(target_fn, space, name=f"{f.name}-shifted")
    return source, target


def target_minimizer(f: TestFunction, shift: ShiftSpec,
                     which: int = 0) -> np.ndarray:
    """Raw-coordinate location of the target's minimum, when the preimage
    of f's minimizer stays inside the box."""
    unit = f.space.normalize(f.minimizers[which])
    pre = shift.invert_unit(unit)
    return f.space.denormalize(pre)


# Named pairs used by the experiment runner and the demo scripts.  The
# permuted/warped entries relocate the optimum and stretch the error scale;
# the plain entries are identity shifts (target == source pointwise).
_PAIRS: dict[str, Callable[[], tuple[TestFunction, ShiftSpec]]] = {
    "branin": lambda: (branin(), ShiftSpec.identity(2)),
    "branin-permuted": lambda: (
        branin(),
        ShiftSpec(k=2, permutation=(1, 0),
                  output=OutputWarp("cubic", 0.002, 1.0)),
    ),
    "hartmann6": lambda: (hartmann6(), ShiftSpec.identity(6)),
    "hartmann6-permuted": lambda: (
        hartmann6(),
        ShiftSpec(k=6, permutation=(2, 0, 4, 5, 1, 3),
                  output=OutputWarp("cubic", 2.0, 1.0)),
    ),
    "rosenbrock8": lambda: (rosenbrock8(), ShiftSpec.identity(8)),
    "bowl8": lambda: (quadratic_bowl8(), ShiftSpec.identity(8)),
    "bowl8-shifted": lambda: (
        quadratic_bowl8(),
        ShiftSpec(k=8, matrix=np.diag(np.full(8, 0.75)),
                  offset=np.full(8, 0.15),
                  output=OutputWarp("affine", 10.0, 3.0)),
    ),
}

BENCHMARK_NAMES = tuple(sorted(_PAIRS))


def benchmark_parts(name: str) -> tuple[TestFunction, ShiftSpec]:
    """The (function, shift) recipe behind a named benchmark pair."""
    try:
        factory = _PAIRS[name]
    except KeyError:
        raise ValueError(
            f"unknown benchmark {name!r}; choose from {BENCHMARK_NAMES}"
        ) from None
    return factory()


def benchmark_pair(name: str) -> tuple[Objective, Objective]:
    """Fresh (source, target) objectives for a named benchmark pair."""
    f, shift = benchmark_parts(name)
    return make_pair(f, shift)
