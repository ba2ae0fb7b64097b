#
# Closed-form prox mappings for the entropy geometry:
#   - the solid-simplex entropy prox and the primal mirror step built on it,
#   - the multiplicative (KL) dual step of the hinge loss,
#   - the softmax dual step, in closed form and by Lagrangian root search.
#
# Every exponentiation is max-shifted; the total mass and the normalisers are
# handled in log space.
#

import math

import numpy as np
from scipy.optimize import brentq

from saddle_core import LossKind, ProblemGeometry
from saddle_exceptions import InvalidProblemError, NumericalError

POSITIVE_FLOOR = 1e-300
ROOT_TOLERANCE = 1e-14
MAX_BRACKET_STEPS = 200


def _entropy_prox(X0: np.ndarray, scaled_gradient: np.ndarray, log_shrink: float, radius: float) -> np.ndarray:
    """
    Returns rho * X0 * exp(-g) / M with M = sum X0 * exp(-g) and
    rho = min(M * exp(log_shrink), radius).
    """
    exponents = -scaled_gradient
    shift = float(exponents.max())
    weights = X0 * np.exp(exponents - shift)
    log_weight_sum = math.log(float(weights.sum()))
    log_rho = min(log_weight_sum + shift + log_shrink, math.log(radius))
    out = weights * math.exp(log_rho - log_weight_sum)
    return np.maximum(out, POSITIVE_FLOOR)


def solid_simplex_entropy_prox(X0, S, C1: float, C2: float, R: float) -> np.ndarray:
    """
    argmin over {X >= 0, ||X||_1 <= R} of
        C1 ||X||_1 + <S, X> + C2 sum_i X_i log(X_i / X0_i).
    """
    if not C2 > 0:
        raise InvalidProblemError(f"C2 must be positive, got {C2}.")
    if not R > 0:
        raise InvalidProblemError(f"Radius must be positive, got {R}.")
    if not C1 >= 0:
        raise InvalidProblemError(f"C1 must be non-negative, got {C1}.")
    X0 = np.asarray(X0, dtype=np.float64)
    if (X0 <= 0).any():
        raise InvalidProblemError("Prox centre must be strictly positive.")
    S = np.asarray(S, dtype=np.float64)
    return _entropy_prox(X0, S / C2, -(C1 + C2) / C2, R)


def primal_md_step(U: np.ndarray, S: np.ndarray, gamma: float, geometry: ProblemGeometry) -> np.ndarray:
    """
    Composite primal mirror step on the solid simplex:
    U+ = U * exp(-2 gamma R* L S) * min{exp(-2 gamma lam R* L), R*/M}.
    """
    if (U <= 0).any():
        raise InvalidProblemError("Primal iterate must be strictly positive.")
    scale = 2.0 * gamma * geometry.radius * geometry.log_dim
    return _entropy_prox(U, scale * S, -scale * geometry.lam, geometry.radius)


def dual_hinge_step(V: np.ndarray, Z: np.ndarray, gamma: float) -> np.ndarray:
    """Row-wise V+ proportional to V * exp(2 gamma log(k) Z)."""
    k = V.shape[1]
    exponents = (2.0 * gamma * math.log(k)) * Z
    exponents = exponents - exponents.max(axis=1, keepdims=True)
    W = V * np.exp(exponents)
    W /= W.sum(axis=1, keepdims=True)
    return np.maximum(W, POSITIVE_FLOOR)


def dual_softmax_step(V: np.ndarray, Z: np.ndarray, gamma: float, method="closed") -> np.ndarray:
    """
    Row-wise minimiser over the simplex of
        sum v log v - <z, v> + KL(v, V_row) / (2 gamma log k),
    where Z holds the linear coefficients (the margins X_hat U).
    The closed form is the weighted geometric mean
        v proportional to exp((a z + log V_row) / (1 + a)),  a = 2 gamma log k.
    """
    k = V.shape[1]
    a = 2.0 * gamma * math.log(k) if k > 1 else 0.0
    if a == 0.0:
        return V.copy()
    log_V = np.log(np.maximum(V, POSITIVE_FLOOR))
    if method == "closed":
        logits = (a * Z + log_V) / (1.0 + a)
        logits -= logits.max(axis=1, keepdims=True)
        W = np.exp(logits)
        W /= W.sum(axis=1, keepdims=True)
        return np.maximum(W, POSITIVE_FLOOR)
    if method == "root":
        out = np.empty_like(V)
        for j in range(V.shape[0]):
            out[j] = _softmax_row_by_root_search(Z[j], log_V[j], a)
        return np.maximum(out, POSITIVE_FLOOR)
    raise InvalidProblemError(f"Unknown dual softmax method '{method}'.")


def _softmax_row_by_root_search(z: np.ndarray, log_v: np.ndarray, a: float) -> np.ndarray:
    # Stationarity gives log v_l = (a (z_l - 1 - mu) + log V_l) / (1 + a);
    # mu is the multiplier of the sum-to-one constraint.
    def row_at(mu):
        return np.exp((a * (z - 1.0 - mu) + log_v) / (1.0 + a))

    def excess(mu):
        return float(row_at(mu).sum()) - 1.0

    # at mu = centre the largest term equals one, so the excess is >= 0
    centre = float(np.max(z - 1.0 + log_v / a))
    lo, hi = centre - 1.0, centre + 1.0
    for _ in range(MAX_BRACKET_STEPS):
        if excess(lo) > 0:
            break
        lo -= 2.0 * (hi - lo)
    for _ in range(MAX_BRACKET_STEPS):
        if excess(hi) < 0:
            break
        hi += 2.0 * (hi - lo)
    f_lo, f_hi = excess(lo), excess(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi) and f_lo > 0 > f_hi):
        raise NumericalError("Dual root search failed to bracket the multiplier.")
    mu = brentq(excess, lo, hi, xtol=ROOT_TOLERANCE, rtol=4 * np.finfo(float).eps, maxiter=500)
    row = row_at(mu)
    return row / row.sum()


def dual_step(loss: LossKind, V: np.ndarray, margins: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """Loss-specific dual mirror step given the (estimated) margins X_hat U."""
    if loss is LossKind.HINGE:
        return dual_hinge_step(V, margins - Y, gamma)
    return dual_softmax_step(V, margins, gamma)
