#
# Dense primitives shared by every solver: the dataset model, the virtual
# augmented matrix X_hat = [X, -X], mixed l_p x l_q norms and the
# data-dependent constants of the saddle-point problem.
#
# All arrays are float64, row-major. Indices are 0-based.
#

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from saddle_exceptions import InvalidProblemError

ALLOWED_NORM_ORDERS = (1, 2, math.inf)


class LossKind(enum.Enum):
    """Fenchel-Young loss selector."""
    HINGE = "hinge"
    SOFTMAX = "softmax"

    @classmethod
    def parse(cls, text) -> "LossKind":
        if isinstance(text, LossKind):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise InvalidProblemError(f"Unknown loss '{text}'. Use 'hinge' or 'softmax'.")


@dataclass(frozen=True)
class Dataset:
    """
    Feature rows X (n x d), 0-based labels y and the derived one-hot matrix Y.
    Arrays are stored read-only; a Dataset can be shared between solvers.
    """
    X: np.ndarray
    y: np.ndarray
    k: int
    Y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidProblemError(f"Feature matrix must be a non-empty 2-D array, got shape {X.shape}.")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidProblemError(f"Expected {X.shape[0]} labels, got shape {y.shape}.")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidProblemError("Labels must be integers.")
        y = y.astype(np.int64)
        k = int(self.k)
        if k < 1:
            raise InvalidProblemError(f"Number of classes must be positive, got {k}.")
        if y.min() < 0 or y.max() >= k:
            raise InvalidProblemError(f"Labels must lie in [0, {k - 1}].")

        Y = np.zeros((X.shape[0], k))
        Y[np.arange(X.shape[0]), y] = 1.0
        for array in (X, y, Y):
            array.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_labels(cls, X, y, k=None) -> "Dataset":
        """Builds a dataset, inferring k as max label + 1 when not given."""
        y = np.asarray(y)
        if k is None:
            k = int(y.max()) + 1 if y.size else 0
        return cls(X=X, y=y, k=k)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __repr__(self):
        return f"<Dataset: n={self.n} d={self.d} k={self.k}>"


class AugmentedView:
    """
    Read access to X_hat = [X, -X] (n x 2d) without storing the negated block.
    """
    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.shape = (dataset.n, 2 * dataset.d)

    def column(self, i: int) -> np.ndarray:
        d = self.dataset.d
        if not 0 <= i < 2 * d:
            raise InvalidProblemError(f"Augmented column index {i} out of range [0, {2 * d}).")
        if i < d:
            return self.dataset.X[:, i].copy()
        return -self.dataset.X[:, i - d]

    def row(self, j: int) -> np.ndarray:
        x = self.dataset.X[j]
        return np.concatenate((x, -x))

    def matmul(self, U: np.ndarray) -> np.ndarray:
        """X_hat @ U for U of shape (2d, k)."""
        d = self.dataset.d
        return self.dataset.X @ (U[:d] - U[d:])

    def rmatmul(self, M: np.ndarray) -> np.ndarray:
        """X_hat.T @ M for M of shape (n, k)."""
        G = self.dataset.X.T @ M
        return np.vstack((G, -G))

    def column_norms(self) -> np.ndarray:
        """l2 norms of the 2d augmented columns."""
        norms = np.linalg.norm(self.dataset.X, axis=0)
        return np.concatenate((norms, norms))

    def row_norms_inf(self) -> np.ndarray:
        """l_inf norms of the n augmented rows (negation does not change them)."""
        return np.abs(self.dataset.X).max(axis=1)


def augmented_column(view: AugmentedView, i: int) -> np.ndarray:
    return view.column(i)


def fold(U: np.ndarray) -> np.ndarray:
    """Maps a (2d, k) simplex-domain matrix to the d x k model U1 - U2."""
    d = U.shape[0] // 2
    return U[:d] - U[d:]


def mixed_norm(A, p, q) -> float:
    """
    l_p norm of the vector of l_q row norms. p, q in {1, 2, inf}.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise InvalidProblemError("mixed_norm needs a non-empty matrix.")
    if p not in ALLOWED_NORM_ORDERS or q not in ALLOWED_NORM_ORDERS:
        raise InvalidProblemError(f"Unsupported mixed norm orders p={p}, q={q}.")
    row_norms = np.linalg.norm(A, ord=q, axis=1)
    return float(np.linalg.norm(row_norms, ord=p))


def fenchel_residual(loss: LossKind, k: int) -> float:
    """
    max_y { f(1/k, y) - min_v f(v, y) } for the loss's Fenchel term f.
    """
    if loss is LossKind.HINGE:
        return 0.0
    # f(v) = sum v log v does not depend on y and is minimised at the uniform
    # vector, which is also the starting point.
    uniform = np.full(k, 1.0 / k)
    baseline = float(np.sum(uniform * np.log(uniform)))
    minimum = -math.log(k)
    return max(baseline - minimum, 0.0)


@dataclass(frozen=True)
class ProblemGeometry:
    colnorm2_max: float
    rowinf_sum: float
    lipschitz: float
    omega_U: float
    omega_V: float
    radius: float
    lam: float
    sigma2_U_bar: float
    sigma2_V_bar: float
    residual: float
    n: int
    d: int
    k: int
    loss: LossKind = LossKind.HINGE

    @property
    def log_dim(self) -> float:
        """L = log(2dk)."""
        return math.log(2 * self.d * self.k)


def geometry_from(dataset: Dataset, radius: float, lam: float, loss=LossKind.HINGE) -> ProblemGeometry:
    """
    Computes the norm constants, potential ranges and variance-proxy bounds of
    the problem in O(dn).
    """
    loss = LossKind.parse(loss)
    if not radius > 0:
        raise InvalidProblemError(f"Radius must be positive, got {radius}.")
    if not lam >= 0:
        raise InvalidProblemError(f"Regularization must be non-negative, got {lam}.")

    n, d, k = dataset.n, dataset.d, dataset.k
    colnorm2_max = mixed_norm(dataset.X.T, math.inf, 2)
    rowinf_sum = mixed_norm(dataset.X, 1, math.inf)
    log_dim = math.log(2 * d * k)

    # k = 1 leaves a single dual vertex; keep Omega_V positive so the
    # stepsize rules stay defined.
    omega_V = n * math.log(k) if k > 1 else float(n)

    return ProblemGeometry(
        colnorm2_max=colnorm2_max,
        rowinf_sum=rowinf_sum,
        lipschitz=colnorm2_max / n,
        omega_U=radius ** 2 * log_dim,
        omega_V=omega_V,
        radius=float(radius),
        lam=float(lam),
        sigma2_U_bar=4.0 * radius ** 2 * colnorm2_max ** 2 / n ** 2,
        sigma2_V_bar=8.0 * colnorm2_max ** 2 / n + 8.0 * rowinf_sum ** 2 / n ** 2,
        residual=fenchel_residual(loss, k),
        n=n,
        d=d,
        k=k,
        loss=loss,
    )
