"""Snapshot matrices and least-squares identification of ``[A, B]``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PersistentExcitationError, RankDeficiencyError, InvalidInputError, ShapeError
from .linalg import LtiModel, _frozen, as_mat, pinv_times, svd_extremes


@dataclass(frozen=True)
class DataMatrices:
    """Column-aligned snapshot triples ``(x_t, x_{t+1}, u_t)``.

    ``X`` and ``Xplus`` are ``n x T``, ``U`` is ``m x T``.
    """

    X: np.ndarray
    Xplus: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        X = as_mat(self.X, "X")
        Xplus = as_mat(self.Xplus, "Xplus")
        raw_u = np.asarray(self.U, dtype=float)
        if raw_u.ndim == 2 and raw_u.shape[0] == 0:
            U = raw_u  # autonomous data: no input channels
        else:
            U = as_mat(self.U, "U")
        if X.shape != Xplus.shape:
            raise ShapeError(f"X is {X.shape} but Xplus is {Xplus.shape}")
        if U.shape[1] != X.shape[1]:
            raise ShapeError(f"U has {U.shape[1]} columns, X has {X.shape[1]}")
        for name, arr in (("X", X), ("Xplus", Xplus), ("U", U)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def Psi(self) -> np.ndarray:
        return np.vstack([self.X, self.U])

    def gram(self) -> np.ndarray:
        Psi = self.Psi
        return Psi @ Psi.T / self.T


def _check_trajectory(k: int, states, inputs, n: int | None, m: int | None):
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if states.ndim != 2 or inputs.ndim != 2:
        raise ShapeError(f"trajectory {k}: states and inputs must be 2-D arrays")
    if states.shape[1] != inputs.shape[1] + 1:
        raise ShapeError(
            f"trajectory {k}: {states.shape[1]} state columns but {inputs.shape[1]} input columns"
        )
    if inputs.shape[1] < 1:
        raise ShapeError(f"trajectory {k}: needs at least one input column")
    if n is not None and (states.shape[0] != n or inputs.shape[0] != m):
        raise ShapeError(
            f"trajectory {k}: dimensions ({states.shape[0]}, {inputs.shape[0]}) differ from ({n}, {m})"
        )
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(inputs))):
        raise InvalidInputError(f"trajectory {k}: non-finite entries")
    return states, inputs


def build_data_matrices(trajectories) -> DataMatrices:
    """Concatenate trajectories ``(states n x (L+1), inputs m x L)`` column-wise.

    Columns are ordered by trajectory index, then time.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise InvalidInputError("no trajectories given")
    n = m = None
    Xs, Xps, Us = [], [], []
    for k, (states, inputs) in enumerate(trajectories):
        states, inputs = _check_trajectory(k, states, inputs, n, m)
        n, m = states.shape[0], inputs.shape[0]
        Xs.append(states[:, :-1])
        Xps.append(states[:, 1:])
        Us.append(inputs)
    return DataMatrices(np.hstack(Xs), np.hstack(Xps), np.hstack(Us))


@dataclass(frozen=True)
class IdentifiedModel:
    G_hat: np.ndarray
    n: int
    m: int
    gram: np.ndarray

    @property
    def A_hat(self) -> np.ndarray:
        return self.G_hat[:, : self.n]

    @property
    def B_hat(self) -> np.ndarray:
        return self.G_hat[:, self.n :]

    def as_lti(self) -> LtiModel:
        return LtiModel(self.A_hat, self.B_hat)


def identify(data: DataMatrices) -> IdentifiedModel:
    """Least-squares ``[A_hat, B_hat] = (X+ Psi'/T)(Psi Psi'/T)^{-1}``."""
    Psi = data.Psi
    W = Psi @ Psi.T / data.T
    Y = data.Xplus @ Psi.T / data.T
    try:
        G = pinv_times(Y, W)
    except RankDeficiencyError:
        raise PersistentExcitationError(svd_extremes(Psi)[1]) from None
    return IdentifiedModel(_frozen(G), data.n, data.m, _frozen(W))


def identification_report(model: IdentifiedModel, data: DataMatrices) -> dict:
    s_max, s_min = svd_extremes(data.Psi)
    residual = data.Xplus - model.G_hat @ data.Psi
    return {
        "T": data.T,
        "sigma_min_psi": s_min,
        "sigma_max_psi": s_max,
        "residual_norm": float(np.linalg.norm(residual)),
    }


def relative_error(truth, estimate) -> float:
    """``||truth - estimate||_F / ||truth||_F``."""
    truth = as_mat(truth, "truth")
    estimate = as_mat(estimate, "estimate")
    if truth.shape != estimate.shape:
        raise ShapeError(f"shapes differ: {truth.shape} vs {estimate.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise InvalidInputError("relative error undefined for a zero reference matrix")
    return float(np.linalg.norm(truth - estimate) / denom)


def relative_error_2(truth, estimate) -> float:
    """Spectral-norm counterpart of :func:`relative_error`."""
    truth = as_mat(truth, "truth")
    estimate = as_mat(estimate, "estimate")
    if truth.shape != estimate.shape:
        raise ShapeError(f"shapes differ: {truth.shape} vs {estimate.shape}")
    denom = np.linalg.norm(truth, 2)
    if denom == 0:
        raise InvalidInputError("relative error undefined for a zero reference matrix")
    return float(np.linalg.norm(truth - estimate, 2) / denom)
