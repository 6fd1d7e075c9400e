from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from ulrs.common.errors import DataError, DimensionError, RankError

FloatArray = NDArray[np.float64]

UNIT_NORM_TOL = 1e-9


def _frozen(array: FloatArray) -> FloatArray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dictionary:
    """
    Bank of matched subspaces: an n×K matrix whose columns are unit-norm atoms.

    Any selection of a few columns spans one low-rank subspace of the union.
    Instances are immutable; learning code builds a new one per iteration.
    """

    atoms: FloatArray

    def __post_init__(self) -> None:
        atoms = np.asarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise DimensionError("dictionary must be a non-empty 2-D matrix", shape=atoms.shape)
        if not np.all(np.isfinite(atoms)):
            raise DataError("dictionary contains NaN or Inf entries")
        norms = np.linalg.norm(atoms, axis=0)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > UNIT_NORM_TOL:
            raise DataError("dictionary atoms must have unit ℓ2 norm", max_deviation=worst)
        object.__setattr__(self, "atoms", _frozen(atoms))

    @classmethod
    def from_matrix(cls, matrix: FloatArray) -> "Dictionary":
        """Normalize the columns of `matrix`; zero columns are rejected."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionError("dictionary must be a 2-D matrix", shape=matrix.shape)
        norms = np.linalg.norm(matrix, axis=0)
        if np.any(norms == 0.0):
            raise DataError("cannot normalize an all-zero atom", atoms=np.flatnonzero(norms == 0.0).tolist())
        return cls(matrix / norms)

    @property
    def n(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def K(self) -> int:
        return int(self.atoms.shape[1])

    def check_signal(self, y: FloatArray) -> FloatArray:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != self.n:
            raise DimensionError("signal length does not match dictionary", expected=self.n, got=y.shape)
        return y


def support_threshold(coefficients: FloatArray) -> float:
    """Magnitude above which a coefficient counts as part of the support."""
    peak = float(np.max(np.abs(coefficients))) if coefficients.size else 0.0
    return 1e-10 * max(1.0, peak)


@dataclass(frozen=True)
class SparseCode:
    """
    Coefficients x of a signal over a dictionary together with their support.

    Entries outside `support` are exactly zero; `residual_norm` is ‖y − Dx‖₂ for
    the (D, y) pair that produced the code.
    """

    coefficients: FloatArray
    support: tuple[int, ...]
    residual_norm: float
    iterations: int = 0
    objective_trace: tuple[float, ...] = ()

    @classmethod
    def build(
        cls,
        matrix: FloatArray,
        y: FloatArray,
        coefficients: FloatArray,
        iterations: int = 0,
        objective_trace: tuple[float, ...] = (),
    ) -> "SparseCode":
        """Snap numerical zeros to 0 and derive the support and residual."""
        x = np.array(coefficients, dtype=np.float64, copy=True)
        x[np.abs(x) <= support_threshold(x)] = 0.0
        support = tuple(int(j) for j in np.flatnonzero(x))
        residual = float(np.linalg.norm(y - matrix @ x))
        return cls(_frozen(x), support, residual, iterations, objective_trace)

    @property
    def l0(self) -> int:
        return len(self.support)

    def reconstruct(self, dictionary: Dictionary) -> FloatArray:
        return dictionary.atoms @ self.coefficients


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"

    @property
    def flag(self) -> int:
        return 1 if self is Hypothesis.H1 else 0


@dataclass(frozen=True)
class Detection:
    """Outcome of one decision: statistic, threshold it was compared to, verdict."""

    statistic_t: float
    threshold: float
    decision: Hypothesis
    code: SparseCode

    def __post_init__(self) -> None:
        expected = Hypothesis.H1 if self.statistic_t > self.threshold else Hypothesis.H0
        if self.decision is not expected:
            raise ValueError("decision must be H1 exactly when statistic exceeds threshold")


@dataclass(frozen=True)
class InterferenceBasis:
    """n×p basis of a known interference subspace (p < n, full column rank)."""

    columns: FloatArray

    def __post_init__(self) -> None:
        columns = np.asarray(self.columns, dtype=np.float64)
        if columns.ndim == 1:
            columns = columns[:, None]
        n, p = columns.shape
        if p >= n:
            raise DimensionError("interference basis needs fewer columns than rows", n=n, p=p)
        condition = float(np.linalg.cond(columns))
        if not np.isfinite(condition) or condition > 1e10:
            raise RankError("interference basis is not full column rank", condition=condition)
        object.__setattr__(self, "columns", _frozen(columns))

    @property
    def n(self) -> int:
        return int(self.columns.shape[0])


@dataclass(frozen=True)
class LearnStats:
    """Training diagnostics of one dictionary-learning run."""

    per_iteration_rmse: tuple[float, ...]
    final_esr: float
    iterations_run: int
    # (before, after) Frobenius error of every K-SVD dictionary-update stage
    stage_errors: tuple[tuple[float, float], ...] = ()
    replaced_atoms: int = 0


@dataclass(frozen=True)
class RocCurve:
    """
    Operating points (pf, pd, threshold), pf strictly increasing.

    A point means "decide H1 when the score is strictly above threshold".
    """

    pf: FloatArray
    pd: FloatArray
    thresholds: FloatArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        pf = np.asarray(self.pf, dtype=np.float64)
        pd = np.asarray(self.pd, dtype=np.float64)
        thresholds = np.asarray(self.thresholds, dtype=np.float64)
        if thresholds.size == 0:
            thresholds = np.full(pf.shape, np.nan)
        if not (pf.shape == pd.shape == thresholds.shape) or pf.ndim != 1:
            raise DimensionError("ROC arrays must be 1-D and of equal length")
        if np.any(np.diff(pf) <= 0):
            raise DataError("ROC false-alarm rates must be strictly increasing")
        if np.any(np.diff(pd) < 0):
            raise DataError("ROC detection rates must be non-decreasing")
        if np.any((pf < 0) | (pf > 1) | (pd < 0) | (pd > 1)):
            raise DataError("ROC rates must lie in [0, 1]")
        object.__setattr__(self, "pf", _frozen(pf))
        object.__setattr__(self, "pd", _frozen(pd))
        object.__setattr__(self, "thresholds", _frozen(thresholds))

    def __len__(self) -> int:
        return int(self.pf.shape[0])

    def __iter__(self) -> Iterator[tuple[float, float, float]]:
        for pf, pd, thr in zip(self.pf, self.pd, self.thresholds):
            yield float(pf), float(pd), float(thr)

    def auc(self) -> float:
        """Trapezoidal area, after extending the curve to (0, ·) and (1, 1)."""
        pf = self.pf
        pd = self.pd
        if pf.size == 0 or pf[0] > 0.0:
            pf = np.concatenate(([0.0], pf))
            pd = np.concatenate(([0.0], pd))
        if pf[-1] < 1.0:
            pf = np.concatenate((pf, [1.0]))
            pd = np.concatenate((pd, [1.0]))
        return float(np.sum(np.diff(pf) * (pd[1:] + pd[:-1]) / 2.0))

    def pd_at(self, alpha: float) -> float:
        """Best detection rate among operating points with pf ≤ alpha."""
        admissible = self.pf <= alpha + 1e-12
        if not np.any(admissible):
            return 0.0
        return float(np.max(self.pd[admissible]))
