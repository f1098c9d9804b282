"""Deterministic bound on ``||[A - A_hat, B - B_hat]||`` from quantized data.

Only the quantized snapshots and the error budget enter :func:`compute_bound`.
:func:`decompose_error_oracle` is the audit counterpart: it needs the
unquantized data and exposes every intermediate matrix of the derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError, RobustPEViolation, ShapeError
from .linalg import pinv_times, spectral_norm, svd_extremes
from .quantizer import ErrorBudget, budget_from_errors
from .sysid import DataMatrices, IdentifiedModel


def check_robust_pe(data: DataMatrices, budget: ErrorBudget) -> tuple[bool, float]:
    """Return ``(margin > 0, margin)`` with ``margin = sigma_min(Psi) - sqrt(T) * eps``."""
    sigma_min = svd_extremes(data.Psi)[1]
    margin = sigma_min - math.sqrt(data.T) * budget.eps
    return margin > 0, margin


@dataclass(frozen=True)
class ErrorBoundReport:
    sigma_min_psi: float
    sigma_max_psi: float
    sigma_max_xplus: float
    G_hat_norm2: float
    Gamma_Y: float
    Gamma_W: float
    rho: float
    denom: float
    robust_pe_ok: bool
    T: int
    budget: ErrorBudget = field(repr=False)

    @property
    def margin(self) -> float:
        return self.sigma_min_psi - math.sqrt(self.T) * self.budget.eps

    def to_dict(self) -> dict:
        return {
            "sigma_min_psi": self.sigma_min_psi,
            "sigma_max_psi": self.sigma_max_psi,
            "sigma_max_xplus": self.sigma_max_xplus,
            "G_hat_norm2": self.G_hat_norm2,
            "Gamma_Y": self.Gamma_Y,
            "Gamma_W": self.Gamma_W,
            "rho": self.rho,
            "denom": self.denom,
            "robust_pe_margin": self.margin,
            "robust_pe_ok": self.robust_pe_ok,
            "T": self.T,
            "budget": self.budget.to_dict(),
        }


def compute_bound(model: IdentifiedModel, data: DataMatrices, budget: ErrorBudget) -> ErrorBoundReport:
    """Compute ``rho = T (||G_hat||_2 Gamma_W + Gamma_Y) / (sigma_min(Psi) - sqrt(T) eps)^2``.

    Raises :class:`RobustPEViolation` when the denominator's base is not positive.
    """
    if model.n != data.n or model.m != data.m:
        raise ShapeError("identified model and dataset dimensions differ")
    T = data.T
    rt = math.sqrt(T)
    eps, eps_x = budget.eps, budget.eps_x
    s_max, s_min = svd_extremes(data.Psi)
    sx_max = svd_extremes(data.Xplus)[0]
    margin = s_min - rt * eps
    if margin <= 0:
        raise RobustPEViolation(margin)
    gamma_y = sx_max * eps / rt + s_max * eps_x / rt + eps_x * eps
    gamma_w = 2.0 * eps * s_max / rt + eps**2
    g_norm = spectral_norm(model.G_hat)
    denom = margin**2
    rho = T * (g_norm * gamma_w + gamma_y) / denom
    return ErrorBoundReport(
        sigma_min_psi=s_min,
        sigma_max_psi=s_max,
        sigma_max_xplus=sx_max,
        G_hat_norm2=g_norm,
        Gamma_Y=gamma_y,
        Gamma_W=gamma_w,
        rho=rho,
        denom=denom,
        robust_pe_ok=True,
        T=T,
        budget=budget,
    )


@dataclass(frozen=True)
class ErrorDecomposition:
    Y: np.ndarray
    dY: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    G: np.ndarray
    G_hat: np.ndarray
    dG: np.ndarray
    Gamma_Y: float
    Gamma_W: float
    reconstruction_error: float
    budget: ErrorBudget = field(repr=False)

    @property
    def dY_ok(self) -> bool:
        return float(np.linalg.norm(self.dY)) <= self.Gamma_Y

    @property
    def dW_ok(self) -> bool:
        return float(np.linalg.norm(self.dW)) <= self.Gamma_W

    @property
    def reconstruction_ok(self) -> bool:
        return self.reconstruction_error <= 1e-9


def decompose_error_oracle(
    data_uqz: DataMatrices, data_qz: DataMatrices, budget: ErrorBudget | None = None
) -> ErrorDecomposition:
    """Split the true-minus-identified error into its data-perturbation pieces.

    With ``E_X+ = X+_uqz - X+~`` and ``E_Psi = Psi_uqz - Psi~``::

        Y  = X+~ Psi~' / T          dY = (X+~ E_Psi' + E_X+ Psi~' + E_X+ E_Psi') / T
        W  = Psi~ Psi~' / T         dW = (Psi~ E_Psi' + E_Psi Psi~' + E_Psi E_Psi') / T

    ``G`` is rebuilt through the inverse-of-sum identity and compared against
    the direct solve ``(Y + dY)(W + dW)^{-1}``; the relative mismatch is
    ``reconstruction_error``. Without an explicit ``budget`` the realized
    (sup-norm per component) budget of the error matrices is used.
    """
    if (data_uqz.n, data_uqz.m, data_uqz.T) != (data_qz.n, data_qz.m, data_qz.T):
        raise ShapeError("unquantized and quantized datasets differ in shape")
    T = data_qz.T
    Psi_q, Xp_q = data_qz.Psi, data_qz.Xplus
    E_xp = data_uqz.Xplus - Xp_q
    E_psi = data_uqz.Psi - Psi_q
    if budget is None:
        # x_{t+1} errors are covered by the state rows of E_Psi only within a
        # trajectory, so both state error sources feed the state budget
        E_states = np.hstack([E_psi[: data_qz.n], E_xp])
        budget = budget_from_errors(E_states, E_psi[data_qz.n :])

    Y = Xp_q @ Psi_q.T / T
    dY = (Xp_q @ E_psi.T + E_xp @ Psi_q.T + E_xp @ E_psi.T) / T
    W = Psi_q @ Psi_q.T / T
    dW = (Psi_q @ E_psi.T + E_psi @ Psi_q.T + E_psi @ E_psi.T) / T

    try:
        G = pinv_times(Y + dY, W + dW)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError("W + dW is singular", exc.lambda_min) from None
    G_hat = pinv_times(Y, W)
    inv_sum = pinv_times(np.eye(W.shape[0]), W + dW)
    G_wood = G_hat - G_hat @ dW @ inv_sum + dY @ inv_sum
    scale = max(float(np.linalg.norm(G)), 1e-300)
    recon = float(np.linalg.norm(G - G_wood)) / scale

    rt = math.sqrt(T)
    eps, eps_x = budget.eps, budget.eps_x
    s_max = svd_extremes(Psi_q)[0]
    sx_max = svd_extremes(Xp_q)[0]
    gamma_y = sx_max * eps / rt + s_max * eps_x / rt + eps_x * eps
    gamma_w = 2.0 * eps * s_max / rt + eps**2
    return ErrorDecomposition(
        Y=Y, dY=dY, W=W, dW=dW, G=G, G_hat=G_hat, dG=G - G_hat,
        Gamma_Y=gamma_y, Gamma_W=gamma_w, reconstruction_error=recon, budget=budget,
    )
