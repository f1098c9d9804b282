"""Dense matrix helpers, the LTI model and cost weight types.

Everything downstream passes plain ``numpy.ndarray`` objects around; the
helpers here validate them once at the boundary (2-D, finite, float64) and
freeze the arrays held by value types so they can be shared between worker
processes without copying concerns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DefinitenessError, InvalidInputError, RankDeficiencyError, ShapeError

ABS_FLOOR = 1e-12


def as_mat(value, name: str = "matrix") -> np.ndarray:
    """Return ``value`` as a finite 2-D float64 array (1-D input becomes a column)."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def svd_extremes(M) -> tuple[float, float]:
    """Largest and smallest singular values of ``M``.

    For a rectangular ``p x q`` matrix the smallest singular value is taken
    over ``min(p, q)`` values, so a wide matrix with full row rank has
    ``sigma_min > 0``.
    """
    s = np.linalg.svd(as_mat(M), compute_uv=False)
    return float(s[0]), float(s[-1])


def spectral_norm(M) -> float:
    return svd_extremes(M)[0]


def pinv_times(Y, W) -> np.ndarray:
    """Compute ``Y @ inv(W)`` for symmetric positive definite ``W``.

    The inverse is taken through the eigendecomposition of ``W``; eigenvalues
    below ``dim * lambda_max * 1e-12`` are treated as zero and raise.
    """
    Y = as_mat(Y, "Y")
    W = as_mat(W, "W")
    if W.shape[0] != W.shape[1]:
        raise ShapeError(f"W must be square, got {W.shape}")
    if Y.shape[1] != W.shape[0]:
        raise ShapeError(f"Y has {Y.shape[1]} columns but W is {W.shape[0]}x{W.shape[0]}")
    W = 0.5 * (W + W.T)
    lam, V = np.linalg.eigh(W)
    tol = max(W.shape[0] * abs(lam[-1]) * 1e-12, ABS_FLOOR)
    if lam[0] <= tol:
        raise RankDeficiencyError("W is singular to tolerance", lam[0])
    return ((Y @ V) / lam) @ V.T


def sym_sqrt(S, name: str = "matrix") -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; raises unless ``S`` is PD."""
    S = as_mat(S, name)
    if S.shape[0] != S.shape[1]:
        raise ShapeError(f"{name} must be square, got {S.shape}")
    scale = max(np.abs(S).max(), ABS_FLOOR)
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    if lam[0] <= 0:
        raise DefinitenessError(f"{name} is not positive definite", lam[0])
    root = (V * np.sqrt(lam)) @ V.T
    return 0.5 * (root + root.T)


def spectral_radius(M) -> float:
    M = as_mat(M)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"spectral radius needs a square matrix, got {M.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def controllability_rank(A, B) -> int:
    """Numerical rank of ``[B, AB, ..., A^{n-1}B]`` (tolerance ``n * sigma_max * 1e-12``)."""
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > n * s[0] * 1e-12))


@dataclass(frozen=True, eq=False)
class LtiModel:
    """Discrete-time model ``x_{t+1} = A x_t + B u_t``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_mat(self.A, "A")
        B = as_mat(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ShapeError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def G(self) -> np.ndarray:
        """The stacked ``[A, B]``."""
        return np.hstack([self.A, self.B])

    def is_controllable(self) -> bool:
        return controllability_rank(self.A, self.B) == self.n

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LtiModel":
        try:
            n, m = int(d["n"]), int(d["m"])
            A = np.array(d["A"], dtype=float).reshape(n, n)
            B = np.array(d["B"], dtype=float).reshape(n, m)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed model description: {exc}") from exc
        return cls(A, B)


def save_model(model: LtiModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_model(path) -> LtiModel:
    return LtiModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Stage cost ``x'Qx + u'Ru`` with ``Q, R`` symmetric positive definite."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_mat(self.Q, "Q")
        R = as_mat(self.R, "R")
        for name, S in (("Q", Q), ("R", R)):
            sym_sqrt(S, name)  # validates symmetry and definiteness
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))

    @classmethod
    def identity(cls, n: int, m: int) -> "CostWeights":
        return cls(np.eye(n), np.eye(m))

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CostWeights":
        try:
            return cls(np.array(d["Q"], dtype=float), np.array(d["R"], dtype=float))
        except KeyError as exc:
            raise InvalidInputError(f"cost weights missing {exc}") from exc


def load_cost(path) -> CostWeights:
    return CostWeights.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class CostFactorization:
    """``C_c`` ((n+m) x n) and ``D_cu`` ((n+m) x m) with
    ``[C_c, D_cu]' [C_c, D_cu] = blkdiag(Q, R)``."""

    C_c: np.ndarray
    D_cu: np.ndarray


def factorize_cost(w: CostWeights) -> CostFactorization:
    n, m = w.Q.shape[0], w.R.shape[0]
    C_c = np.vstack([sym_sqrt(w.Q, "Q"), np.zeros((m, n))])
    D_cu = np.vstack([np.zeros((n, m)), sym_sqrt(w.R, "R")])
    return CostFactorization(_frozen(C_c), _frozen(D_cu))
