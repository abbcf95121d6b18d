# detection/correlation.py
"""
Null and alternative distributions of the correlation detection problem.

Under the null an observation is n i.i.d. standard normals. Under the
alternative the coordinates in an anomalous set S of size k share a pairwise
correlation rho (or, for a general-floor model, a user block whose
off-diagonal entries are all at least rho).
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .exceptions import ConfigurationError, PreconditionError

logger = logging.getLogger(__name__)

# === Constants ===
RHO_CEILING = 1.0 - 1e-12


class Hypothesis(str, Enum):
    NULL = "null"
    ALTERNATIVE = "alternative"


class Variant(str, Enum):
    EXACT = "exact"
    GENERAL = "general"


# === Helper Functions ===
def check_rho(rho, *, open_interval=False):
    rho = float(rho)
    if not math.isfinite(rho) or rho < 0.0 or rho >= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1), got {rho}", rho=rho)
    if open_interval and rho == 0.0:
        raise ConfigurationError("rho must lie strictly inside (0, 1) for this statistic", rho=rho)
    return min(rho, RHO_CEILING)


def check_index_set(S, n, k=None):
    S = np.asarray(S, dtype=np.int64).ravel()
    if k is not None and S.size != k:
        raise ConfigurationError(f"Index set has {S.size} elements, expected k={k}", size=int(S.size), k=k)
    if S.size and (S.min() < 0 or S.max() >= n):
        raise ConfigurationError(f"Index set out of range for n={n}", n=n)
    if np.unique(S).size != S.size:
        raise ConfigurationError("Index set contains repeated indices")
    return S


def check_observation(X, n=None):
    X = np.asarray(X, dtype=np.float64).ravel()
    if n is not None and X.size != n:
        raise ConfigurationError(f"Observation has length {X.size}, model expects n={n}", length=int(X.size), n=n)
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("Observation contains non-finite entries")
    return X


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    n: int
    k: int
    rho: float
    block: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n, k = int(self.n), int(self.k)
        if n < 1 or k < 1 or k > n:
            raise ConfigurationError(f"Need 1 <= k <= n, got n={n}, k={k}", n=n, k=k)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "rho", check_rho(self.rho))
        if self.block is not None:
            object.__setattr__(self, "block", self._check_block(np.asarray(self.block, dtype=np.float64)))

    def _check_block(self, block):
        if block.shape != (self.k, self.k):
            raise ConfigurationError(f"Block must be {self.k}x{self.k}, got {block.shape}")
        if not np.allclose(block, block.T, rtol=0.0, atol=1e-12):
            raise ConfigurationError("Block must be symmetric")
        if not np.allclose(np.diag(block), 1.0, rtol=0.0, atol=1e-12):
            raise ConfigurationError("Block must have a unit diagonal")
        off = block[~np.eye(self.k, dtype=bool)]
        if off.size and off.min() < self.rho - 1e-12:
            raise ConfigurationError(f"Block off-diagonal entries must be >= rho={self.rho}", minimum=float(off.min()))
        try:
            np.linalg.cholesky(block)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("Block is not positive definite") from exc
        return block

    @classmethod
    def general_floor(cls, n, k, rho, block):
        return cls(n=n, k=k, rho=rho, block=block)

    @property
    def variant(self) -> Variant:
        return Variant.EXACT if self.block is None else Variant.GENERAL

    @cached_property
    def block_factor(self) -> np.ndarray:
        """Lower triangular factor of the k x k covariance block."""
        return np.linalg.cholesky(self.covariance_block())

    def covariance_block(self) -> np.ndarray:
        if self.block is not None:
            return self.block.copy()
        A = np.full((self.k, self.k), self.rho)
        np.fill_diagonal(A, 1.0)
        return A

    def embedded_covariance(self, S) -> np.ndarray:
        """Dense n x n covariance A_S with the block placed on the coordinates of S."""
        S = check_index_set(S, self.n, self.k)
        A = np.eye(self.n)
        A[np.ix_(S, S)] = self.covariance_block()
        return A

    def describe(self) -> dict:
        out = {"n": self.n, "k": self.k, "rho": self.rho, "variant": self.variant.value}
        if self.block is not None:
            out["block"] = self.block.tolist()
        return out


# === Sampling ===
def sample_null(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(int(n))


def sample_alternative(model: CorrelationModel, S, rng: np.random.Generator) -> np.ndarray:
    S = check_index_set(S, model.n, model.k)
    X = rng.standard_normal(model.n)
    if model.variant is Variant.EXACT:
        # X_i = sqrt(rho) U + sqrt(1 - rho) U_i on S
        shared = rng.standard_normal()
        X[S] = math.sqrt(model.rho) * shared + math.sqrt(1.0 - model.rho) * X[S]
    else:
        X[S] = model.block_factor @ X[S]
    return X


def sample_observation(model: CorrelationModel, hypothesis, rng, S=None) -> np.ndarray:
    if Hypothesis(hypothesis) is Hypothesis.NULL:
        return sample_null(model.n, rng)
    if S is None:
        raise ConfigurationError("An anomalous set is required to sample the alternative")
    return sample_alternative(model, S, rng)


# === Quadratic forms ===
def quad_form_scale(k: int, rho: float) -> float:
    return rho / ((1.0 + rho * (k - 1)) * (1.0 - rho))


def quad_form_from_sums(total, total_sq, k: int, rho: float):
    """X^T (I - A_S^{-1}) X from the sum and sum of squares of X over S (vectorized)."""
    c = 1.0 + rho * (k - 1)
    return quad_form_scale(k, rho) * (np.square(total) - c * total_sq)


def quad_form(X, S, rho) -> float:
    rho = check_rho(rho, open_interval=True)
    X = np.asarray(X, dtype=np.float64)
    S = check_index_set(S, X.size)
    if S.size < 1:
        raise ConfigurationError("Index set must be nonempty")
    xs = X[S]
    return float(quad_form_from_sums(xs.sum(), np.dot(xs, xs), S.size, rho))


@dataclass(frozen=True)
class QuadFormLaw:
    """weight_neg * chi2(df_neg) + weight_pos * chi2(df_pos), independent components."""

    weight_neg: float
    weight_pos: float
    df_neg: int
    df_pos: int = 1

    @property
    def is_point_mass(self) -> bool:
        return self.weight_neg == 0.0 and self.weight_pos == 0.0

    @property
    def mean(self) -> float:
        return self.weight_neg * self.df_neg + self.weight_pos * self.df_pos

    @property
    def variance(self) -> float:
        return 2.0 * (self.weight_neg ** 2 * self.df_neg + self.weight_pos ** 2 * self.df_pos)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_point_mass:
            return np.zeros(size)
        neg = rng.chisquare(self.df_neg, size) if self.df_neg > 0 else np.zeros(size)
        return self.weight_neg * neg + self.weight_pos * rng.chisquare(self.df_pos, size)


def quad_form_law(k: int, rho: float, hypothesis) -> QuadFormLaw:
    k = int(k)
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    hypothesis = Hypothesis(hypothesis)
    if k == 1:
        # A_S = I: the quadratic form vanishes identically
        return QuadFormLaw(weight_neg=0.0, weight_pos=0.0, df_neg=0, df_pos=1)
    rho = check_rho(rho, open_interval=True)
    if hypothesis is Hypothesis.NULL:
        return QuadFormLaw(-rho / (1.0 - rho), rho * (k - 1) / (1.0 + rho * (k - 1)), k - 1)
    return QuadFormLaw(-rho, rho * (k - 1), k - 1)


# === Determinants and moment generating functions ===
def log_det_AS(k: int, rho: float) -> float:
    rho = check_rho(rho)
    return (k - 1) * math.log1p(-rho) + math.log1p(rho * (k - 1))


def det_AS(k: int, rho: float) -> float:
    return math.exp(log_det_AS(k, rho))


def spectrum(n: int, k: int, rho: float) -> np.ndarray:
    """Eigenvalues of A_S: 1 - rho (k - 1 times), 1 + rho (k - 1), and 1 (n - k times)."""
    rho = check_rho(rho)
    return np.concatenate([np.full(k - 1, 1.0 - rho), [1.0 + rho * (k - 1)], np.ones(n - k)])


def mgf_matrix_spectrum(n: int, k: int, rho: float) -> np.ndarray:
    """Eigenvalues of M = I - A_S^{-1}."""
    return 1.0 - 1.0 / spectrum(n, k, rho)


def log_gaussian_quad_mgf(eigenvalues) -> float:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size and lam.max() >= 0.5:
        return math.inf
    return float(-0.5 * np.sum(np.log1p(-2.0 * lam)))


def gaussian_quad_mgf(eigenvalues) -> float:
    """E exp(X^T M X) for standard normal X, given the eigenvalues of M; +inf once any reaches 1/2."""
    log_value = log_gaussian_quad_mgf(eigenvalues)
    if math.isinf(log_value):
        return math.inf
    try:
        return math.exp(log_value)
    except OverflowError:
        return math.inf


def log_expected_ZS(k: int, rho: float) -> float:
    return 0.5 * log_det_AS(k, rho)


def expected_ZS(k: int, rho: float) -> float:
    return math.exp(log_expected_ZS(k, rho))
