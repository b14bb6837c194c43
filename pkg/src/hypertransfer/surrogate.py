"""Cubic radial-basis-function interpolant with a linear polynomial tail.

The interpolant through n points has the form

    S(u) = sum_i lambda_i * ||u - u_i||^3  +  c0 + c . u

and is fitted in unit coordinates by solving the augmented linear system

    [ Phi + ridge*I   P ] [ lambda ]   [ y ]
    [ P^T             0 ] [ tail   ] = [ 0 ]

with Phi_ij = ||u_i - u_j||^3 and P = [1 | U].  The zero block enforces the
side conditions sum(lambda) = 0 and sum(lambda_i * u_i) = 0, which make the
system uniquely solvable for the conditionally-positive-definite cubic
kernel.  A linear tail is the minimal choice unisolvent for that kernel.

ridge starts at 0 (exact interpolation) and is escalated through a short
schedule scaled by the largest kernel entry when the solve fails; if the
system stays singular the fit raises with a condition diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve
from scipy.spatial.distance import cdist

from .space import ObservationSet

# Relative ridge escalation schedule, applied after the exact (ridge = 0)
# attempt and scaled by max |Phi|.
_RIDGE_STEPS = (1e-10, 1e-8, 1e-6)

# Residual acceptance for a solve, relative to the data scale.
_SOLVE_RTOL = 1e-9


class SurrogateFitError(RuntimeError):
    """Raised when the interpolation system cannot be solved reliably."""


@dataclass(frozen=True)
class RbfSurrogate:
    """Fitted cubic-RBF-plus-linear-tail interpolant over the unit cube.

    Attributes:
        centers: (n, k) fitted points in unit coordinates.
        lambdas: (n,) kernel coefficients.
        tail: (k+1,) linear tail, tail[0] the constant term.
        ridge: regularization actually used at fit time (0 when the exact
            interpolation system solved cleanly).
    """

    centers: np.ndarray
    lambdas: np.ndarray
    tail: np.ndarray
    ridge: float

    def __post_init__(self):
        for name in ("centers", "lambdas", "tail"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, k = self.centers.shape
        if self.lambdas.shape != (n,):
            raise ValueError(f"lambdas must have shape ({n},)")
        if self.tail.shape != (k + 1,):
            raise ValueError(f"tail must have shape ({k + 1},)")

    @property
    def k(self) -> int:
        return self.centers.shape[1]

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def fit(cls, observations: ObservationSet) -> RbfSurrogate:
        """Fit to an observation set, in unit-normalized coordinates.

        Normalizing first keeps kernel distances comparable across axes with
        very different raw ranges.
        """
        return cls.fit_unit(observations.units, observations.errors)

    @classmethod
    def fit_unit(cls, points: np.ndarray, values: np.ndarray) -> RbfSurrogate:
        """Fit to points already living in [0, 1]^k.

        Requires n >= k + 2 pairwise-distinct points so the augmented system
        is determined.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(values, dtype=float).ravel()
        n, k = points.shape
        if values.shape[0] != n:
            raise ValueError(f"{n} points but {values.shape[0]} values")
        if n < k + 2:
            raise SurrogateFitError(
                f"need at least k + 2 = {k + 2} points for a determined "
                f"linear-tail system, got {n}"
            )
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(values)):
            raise ValueError("points and values must be finite")

        dists = cdist(points, points)
        off_diag = dists + np.diag(np.full(n, np.inf))
        if off_diag.min() <= 0.0:
            raise SurrogateFitError("fitted points must be pairwise distinct")

        phi = dists**3
        p = np.hstack([np.ones((n, 1)), points])
        rhs = np.concatenate([values, np.zeros(k + 1)])
        scale = max(float(np.abs(phi).max()), 1.0)

        last_err = "singular system"
        for rel in (0.0,) + _RIDGE_STEPS:
            ridge = rel * scale
            a = np.block([
                [phi + ridge * np.eye(n), p],
                [p.T, np.zeros((k + 1, k + 1))],
            ])
            try:
                z = solve(a, rhs)
            except LinAlgError as exc:
                last_err = str(exc)
                continue
            if not np.all(np.isfinite(z)):
                last_err = "non-finite solution"
                continue
            residual = a @ z - rhs
            tol = _SOLVE_RTOL * max(1.0, np.abs(values).max(initial=0.0),
                                    np.abs(z).max() * n * 1e-12)
            if np.abs(residual).max() > tol:
                last_err = f"residual {np.abs(residual).max():.3g} > {tol:.3g}"
                continue
            return cls(centers=points, lambdas=z[:n], tail=z[n:], ridge=ridge)

        cond = np.linalg.cond(np.block([
            [phi, p], [p.T, np.zeros((k + 1, k + 1))]
        ]))
        raise SurrogateFitError(
            f"interpolation system unsolvable after ridge escalation "
            f"(condition number {cond:.3g}): {last_err}"
        )

    def predict(self, unit: np.ndarray) -> float:
        """Evaluate the interpolant at one unit-space point."""
        unit = np.asarray(unit, dtype=float)
        if unit.shape != (self.k,):
            raise ValueError(f"expected a point of dimension {self.k}, "
                             f"got shape {unit.shape}")
        return float(self.predict_batch(unit[None, :])[0])

    def predict_batch(self, batch: np.ndarray) -> np.ndarray:
        """Evaluate the interpolant at an (m, k) batch of unit-space points.

        Scalar predict routes through this method, so batch and scalar
        evaluations agree exactly.
        """
        batch = np.asarray(batch, dtype=float)
        if batch.size == 0:
            return np.empty(0)
        batch = np.atleast_2d(batch)
        if batch.shape[1] != self.k:
            raise ValueError(f"expected {self.k} columns, got {batch.shape[1]}")
        kernel = cdist(batch, self.centers) ** 3
        return kernel @ self.lambdas + self.tail[0] + batch @ self.tail[1:]
