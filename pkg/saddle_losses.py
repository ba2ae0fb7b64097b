#
# Fenchel-Young losses (multiclass hinge and softmax), primal and dual
# objectives of the saddle-point problem, and the duality-gap certificate.
#

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from saddle_core import AugmentedView, Dataset, LossKind, ProblemGeometry, fold
from saddle_exceptions import InvalidProblemError

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GapReport:
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int
    elapsed_seconds: float
    averaged_points: int = 0

    def as_row(self) -> dict:
        return {
            "iterations": self.iterations,
            "primal": self.primal_obj,
            "dual": self.dual_obj,
            "gap": self.gap,
            "seconds": self.elapsed_seconds,
        }


def fenchel_term(V: np.ndarray, Y: np.ndarray, loss: LossKind) -> float:
    """F(V, Y) = (1/n) sum_i f(v_i, y_i)."""
    if loss is LossKind.HINGE:
        return float(np.mean(np.sum(V * Y, axis=1)) - 1.0)
    # 0 log 0 = 0
    return float(np.mean(np.sum(xlogy(V, V), axis=1)))


def loss_values(margins: np.ndarray, y: np.ndarray, loss: LossKind) -> np.ndarray:
    """Per-example loss for margins U^T x_i stacked as rows (n x k)."""
    rows = np.arange(margins.shape[0])
    correct = margins[rows, y]
    if loss is LossKind.HINGE:
        scores = margins + 1.0
        scores[rows, y] -= 1.0
        return scores.max(axis=1) - correct
    return logsumexp(margins, axis=1) - correct


def primal_objective(U: np.ndarray, dataset: Dataset, lam: float, loss=LossKind.HINGE) -> float:
    """(1/n) sum_i loss(U^T x_i, y_i) + lam * ||U||_1 for a d x k model U."""
    loss = LossKind.parse(loss)
    U = np.asarray(U, dtype=np.float64)
    if U.shape != (dataset.d, dataset.k):
        raise InvalidProblemError(f"Model must have shape {(dataset.d, dataset.k)}, got {U.shape}.")
    margins = dataset.X @ U
    return float(np.mean(loss_values(margins, dataset.y, loss)) + lam * np.abs(U).sum())


def check_row_stochastic(V: np.ndarray, tolerance=SIMPLEX_TOLERANCE):
    if V.min() < -tolerance or np.abs(V.sum(axis=1) - 1.0).max() > tolerance:
        bad_row = int(np.argmax(np.abs(V.sum(axis=1) - 1.0) + (V.min(axis=1) < -tolerance)))
        raise InvalidProblemError(f"Dual row {bad_row} is not in the probability simplex.")


def dual_objective(V: np.ndarray, dataset: Dataset, geometry: ProblemGeometry, loss=LossKind.HINGE) -> float:
    """
    min over the solid simplex of f(U, V). The linear part attains its minimum
    at a vertex, either 0 or R* e_il for the smallest coefficient.
    """
    loss = LossKind.parse(loss)
    V = np.asarray(V, dtype=np.float64)
    check_row_stochastic(V)
    G = AugmentedView(dataset).rmatmul(V - dataset.Y) / dataset.n + geometry.lam
    inner = geometry.radius * min(0.0, float(G.min()))
    return -fenchel_term(V, dataset.Y, loss) + inner


def duality_gap(U, V, dataset: Dataset, geometry: ProblemGeometry, loss=LossKind.HINGE,
                iterations=0, elapsed_seconds=0.0, averaged_points=0) -> GapReport:
    """
    Gap certificate for a (U, V) pair. U is either the (2d, k) simplex-domain
    matrix or the folded d x k model.
    """
    loss = LossKind.parse(loss)
    U = np.asarray(U, dtype=np.float64)
    if U.shape == (2 * dataset.d, dataset.k):
        U = fold(U)
    elif U.shape != (dataset.d, dataset.k):
        raise InvalidProblemError(f"Primal point has shape {U.shape}, expected "
                                  f"{(2 * dataset.d, dataset.k)} or {(dataset.d, dataset.k)}.")
    primal = primal_objective(U, dataset, geometry.lam, loss)
    dual = dual_objective(V, dataset, geometry, loss)
    return GapReport(
        primal_obj=primal,
        dual_obj=dual,
        gap=primal - dual,
        iterations=iterations,
        elapsed_seconds=elapsed_seconds,
        averaged_points=averaged_points,
    )


def fenchel_argmax(margins, y, loss=LossKind.HINGE) -> np.ndarray:
    """
    The maximising v in max_v { -f(v, y) + (v - y)^T margins }.
    Hinge ties go to the smallest index.
    """
    loss = LossKind.parse(loss)
    margins = np.asarray(margins, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if loss is LossKind.HINGE:
        scores = (1.0 - y) + margins
        v = np.zeros_like(margins)
        v[int(np.argmax(scores))] = 1.0
        return v
    return softmax(margins)


def best_response_dual(U: np.ndarray, dataset: Dataset, loss=LossKind.HINGE) -> np.ndarray:
    """Row-wise fenchel_argmax for a d x k model: the dual maximiser of f(U, .)."""
    loss = LossKind.parse(loss)
    margins = dataset.X @ U
    if loss is LossKind.HINGE:
        scores = margins + (1.0 - dataset.Y)
        V = np.zeros_like(margins)
        V[np.arange(dataset.n), np.argmax(scores, axis=1)] = 1.0
        return V
    return softmax(margins, axis=1)
