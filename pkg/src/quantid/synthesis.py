"""Guaranteed-cost state feedback for ``[A_hat, B_hat]`` under ``||dG|| <= rho``.

The identification error enters as a norm-bounded feedback uncertainty
``w = Delta z`` with ``z = rho [x; u]``. The synthesis LMI is a 5x5 block
matrix in ``(X, M, beta)`` with row/column block sizes
``[n+m, n+m, n, n, n]``::

    [ -beta I   0     0    Cz X - Dzu M    0      ]
    [   *      -I     0    Cc X - Dcu M    0      ]
    [   *       *    -X    A X - B M     beta I   ]   <= 0
    [   *       *     *       -X           0      ]
    [   *       *     *        *        -beta I   ]

and the gain is ``K = M X^{-1}`` with certificate ``P = X^{-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, ShapeError
from .linalg import CostFactorization, CostWeights, LtiModel, as_mat, factorize_cost
from .sysid import IdentifiedModel

LMI_TOL = 1e-7
GCC_TOL = 1e-7
DEFAULT_SOLVERS = ("CLARABEL", "CVXOPT")
BISECTION_STEPS = 30
BISECTION_RTOL = 1e-3


@dataclass(frozen=True)
class UncertaintyChannels:
    B_w: np.ndarray
    C_z: np.ndarray
    D_zu: np.ndarray
    rho: float


def build_channels(rho: float, n: int, m: int) -> UncertaintyChannels:
    if not (rho >= 0 and math.isfinite(rho)):
        raise InvalidInputError(f"rho must be a finite non-negative number, got {rho}")
    C_z = np.vstack([rho * np.eye(n), np.zeros((m, n))])
    D_zu = np.vstack([np.zeros((n, m)), rho * np.eye(m)])
    return UncertaintyChannels(np.eye(n), C_z, D_zu, float(rho))


@dataclass(frozen=True)
class LmiProblem:
    A_hat: np.ndarray
    B_hat: np.ndarray
    channels: UncertaintyChannels
    cost: CostFactorization

    @property
    def n(self) -> int:
        return self.A_hat.shape[0]

    @property
    def m(self) -> int:
        return self.B_hat.shape[1]

    @property
    def block_dims(self) -> list[int]:
        n, m = self.n, self.m
        return [n + m, n + m, n, n, n]

    def _rows(self, X, M, beta, unc=None, coupling=None):
        n, m = self.n, self.m
        p = n + m
        Z = np.zeros
        top = unc if unc is not None else self.channels.C_z @ X - self.channels.D_zu @ M
        perf = self.cost.C_c @ X - self.cost.D_cu @ M
        dyn = self.A_hat @ X - self.B_hat @ M
        link = coupling if coupling is not None else beta * np.eye(n)
        return [
            [-beta * np.eye(p), Z((p, p)), Z((p, n)), top, Z((p, n))],
            [Z((p, p)), -np.eye(p), Z((p, n)), perf, Z((p, n))],
            [Z((n, p)), Z((n, p)), -X, dyn, link],
            [top.T, perf.T, dyn.T, -X, Z((n, n))],
            [Z((n, p)), Z((n, p)), link.T, Z((n, n)), -beta * np.eye(n)],
        ]

    def matrix(self, X, M, beta) -> np.ndarray:
        """Evaluate the block matrix at a numeric point."""
        X = as_mat(X, "X")
        M = as_mat(M, "M")
        if X.shape != (self.n, self.n) or M.shape != (self.m, self.n):
            raise ShapeError(f"X must be {self.n}x{self.n} and M {self.m}x{self.n}")
        out = np.block(self._rows(X, M, float(beta)))
        return 0.5 * (out + out.T)

    def scaled_rows(self, X, M, s):
        """The same inequality after congruence with ``diag(I/rho, I, I, I, I/rho)``.

        With ``beta = rho**2 * s`` this keeps every block of order one when
        ``rho`` is small; only valid for ``rho > 0``.
        """
        rho = self.channels.rho
        n = self.n
        unc = _vstack([X, -M])
        rows = self._rows(X, M, s, unc=unc, coupling=rho * s * np.eye(n))
        return rows

    def max_eig(self, X, M, beta) -> float:
        return float(np.linalg.eigvalsh(self.matrix(X, M, beta))[-1])


def _vstack(blocks):
    if all(isinstance(b, np.ndarray) for b in blocks):
        return np.vstack(blocks)
    import cvxpy as cp

    return cp.vstack(blocks)


def assemble_lmi(model: IdentifiedModel | LtiModel, ch: UncertaintyChannels, cost: CostFactorization) -> LmiProblem:
    A_hat, B_hat = _model_matrices(model)
    n, m = A_hat.shape[0], B_hat.shape[1]
    checks = [
        ("C_z", ch.C_z.shape, (n + m, n)),
        ("D_zu", ch.D_zu.shape, (n + m, m)),
        ("C_c", cost.C_c.shape, (n + m, n)),
        ("D_cu", cost.D_cu.shape, (n + m, m)),
        ("B_w", ch.B_w.shape, (n, n)),
    ]
    for name, got, want in checks:
        if got != want:
            raise ShapeError(f"block {name} has shape {got}, expected {want}")
    return LmiProblem(np.array(A_hat), np.array(B_hat), ch, cost)


def _model_matrices(model):
    if isinstance(model, IdentifiedModel):
        return model.A_hat, model.B_hat
    if isinstance(model, LtiModel):
        return model.A, model.B
    A, B = model
    return as_mat(A, "A_hat"), as_mat(B, "B_hat")


@dataclass
class SynthesisResult:
    solver_status: str  # optimal | feasible | infeasible | numerical-failure
    rho: float
    K: np.ndarray | None = None
    X: np.ndarray | None = None
    M: np.ndarray | None = None
    beta: float | None = None
    P: np.ndarray | None = None
    gamma: float | None = None
    x0: np.ndarray | None = None
    lmi_max_eig: float | None = None
    solver: str | None = None
    attempts: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.solver_status in ("optimal", "feasible")

    def guaranteed_cost(self, x0) -> float:
        x0 = np.asarray(x0, dtype=float).ravel()
        return float(x0 @ self.P @ x0)

    @property
    def guaranteed_cost_x0(self) -> float | None:
        if self.P is None or self.x0 is None:
            return None
        return self.guaranteed_cost(self.x0)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "K": arr(self.K),
            "P": arr(self.P),
            "beta": self.beta,
            "rho": self.rho,
            "guaranteed_cost_x0": self.guaranteed_cost_x0,
            "x0": arr(self.x0),
            "solver_status": self.solver_status,
            "solver": self.solver,
            "lmi_max_eig": self.lmi_max_eig,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisResult":
        def arr(key):
            v = d.get(key)
            return None if v is None else np.array(v, dtype=float)

        P = arr("P")
        return cls(
            solver_status=d["solver_status"],
            rho=float(d["rho"]),
            K=arr("K"),
            P=P,
            X=None if P is None else np.linalg.inv(P),
            beta=d.get("beta"),
            x0=arr("x0"),
            solver=d.get("solver"),
            lmi_max_eig=d.get("lmi_max_eig"),
        )


def _lmi_tolerance(X) -> float:
    return LMI_TOL * max(1.0, float(np.linalg.norm(X, 2)))


def synthesize(
    model,
    rho: float,
    cost: CostWeights,
    x0=None,
    solvers=DEFAULT_SOLVERS,
    check_controllable: bool = True,
) -> SynthesisResult:
    """Solve the guaranteed-cost LMI for the identified model.

    With ``x0`` the certified cost ``x0' X^{-1} x0`` is minimized through the
    epigraph constraint ``[[gamma, x0'], [x0, X]] >= 0``; otherwise a feasible
    point is returned. Solvers are tried in order and a point is accepted only
    if the block matrix evaluated in the original (unscaled) variables has
    ``lambda_max <= 1e-7 * max(1, ||X||)``. When the minimum-cost solve cannot
    be certified, the best certified cost is found by bisection on a cost cap
    and the status is ``"feasible"``.
    """
    import cvxpy as cp

    A_hat, B_hat = _model_matrices(model)
    n, m = A_hat.shape[0], B_hat.shape[1]
    if cost.Q.shape != (n, n) or cost.R.shape != (m, m):
        raise ShapeError("cost weights do not match the model dimensions")
    if check_controllable and not LtiModel(A_hat, B_hat).is_controllable():
        raise InvalidInputError("identified pair (A_hat, B_hat) is not controllable")
    ch = build_channels(rho, n, m)
    lmi = assemble_lmi((A_hat, B_hat), ch, factorize_cost(cost))
    x0v = None if x0 is None else np.asarray(x0, dtype=float).reshape(n, 1)

    result = SynthesisResult("numerical-failure", float(rho), x0=None if x0v is None else x0v.ravel())
    if rho >= 1.0:
        # dA = +-rho I are both admissible and no closed-loop matrix F can have
        # F + rho I and F - rho I Schur at once when rho >= 1
        result.solver_status = "infeasible"
        result.attempts.append({"solver": None, "status": "infeasible: rho >= 1"})
        return result

    Xv = cp.Variable((n, n), symmetric=True)
    Mv = cp.Variable((m, n))
    sv = cp.Variable()
    delta_x = 1e-6 * n / float(np.trace(cost.Q))
    delta_beta = 1e-9
    if rho > 0:
        big = cp.bmat(lmi.scaled_rows(Xv, Mv, sv))
    else:
        big = cp.bmat(lmi._rows(Xv, Mv, sv))
    # the floor sits on the scaled multiplier: beta itself is rho**2 * s
    cons = [0.5 * (big + big.T) << 0, Xv >> delta_x * np.eye(n), sv >= delta_beta]

    def attempt(problem, stage):
        """Solve with each backend in turn; return the first certified point."""
        for name in solvers:
            entry = {"solver": name, "stage": stage}
            result.attempts.append(entry)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    problem.solve(solver=name)
            except Exception as exc:  # solver crash counts as an attempt, never fatal
                entry["status"] = f"error: {type(exc).__name__}"
                continue
            entry["status"] = problem.status
            if problem.status == cp.INFEASIBLE:
                return "infeasible", None
            if Xv.value is None:
                continue
            X = 0.5 * (Xv.value + Xv.value.T)
            M = np.array(Mv.value)
            beta = float(rho**2 * sv.value) if rho > 0 else float(sv.value)
            if np.linalg.eigvalsh(X)[0] <= 0 or beta <= 0:
                continue
            lam = lmi.max_eig(X, M, beta)
            entry["lmi_max_eig"] = lam
            if lam > _lmi_tolerance(X):
                continue
            # the check above is absolute in X; with P = X^{-1} large a tiny
            # residual there can still break the cost inequality in P, so the
            # multiplier form is checked at the audit's scale as well
            P = np.linalg.inv(X)
            P = 0.5 * (P + P.T)
            K = M @ P
            cert = float(np.linalg.eigvalsh(s_procedure_form((A_hat, B_hat), rho, cost, P, K, 1.0 / beta))[-1])
            entry["certificate_max_eig"] = cert
            scale = 1.0 + rho**2 * (1.0 + float(np.linalg.norm(K, 2)) ** 2)
            if cert <= GCC_TOL * float(np.linalg.norm(P, 2)) / scale:
                return problem.status, (name, X, M, beta, lam)
        return "numerical-failure", None

    def accept(point, status):
        name, X, M, beta, lam = point
        P = np.linalg.inv(X)
        result.solver_status = status
        result.solver = name
        result.X, result.M, result.beta, result.P = X, M, beta, 0.5 * (P + P.T)
        result.K = M @ result.P
        result.lmi_max_eig = lam
        result.gamma = None if x0v is None else result.guaranteed_cost(x0v)
        return result

    if x0v is None:
        status, point = attempt(cp.Problem(cp.Minimize(0), cons), "feasibility")
        if point is not None:
            return accept(point, "feasible")
        result.solver_status = "infeasible" if status == "infeasible" else "numerical-failure"
        return result

    gv = cp.Variable((1, 1))
    epigraph = cp.bmat([[gv, x0v.T], [x0v, Xv]]) >> 0
    status, point = attempt(cp.Problem(cp.Minimize(gv[0, 0]), cons + [epigraph]), "min-cost")
    if status == "infeasible":
        result.solver_status = "infeasible"
        return result
    if point is not None:
        return accept(point, "optimal" if status == cp.OPTIMAL else "feasible")

    # Near the feasibility edge the minimum-cost point lies on the boundary and
    # comes back slightly outside it. Any certified point bounds the optimum
    # from above, and bisection on a cost cap closes the gap with feasibility
    # solves, which stay well conditioned.
    lower = float(gv.value[0, 0]) if gv.value is not None and np.isfinite(gv.value).all() else 0.0
    status, best = attempt(cp.Problem(cp.Minimize(0), cons), "feasibility")
    if best is None:
        result.solver_status = "infeasible" if status == "infeasible" else "numerical-failure"
        return result
    upper = float(x0v.ravel() @ np.linalg.solve(best[1], x0v.ravel()))
    lower = min(max(lower, 0.0), upper)
    cap = cp.Parameter(nonneg=True)
    capped = cp.Problem(cp.Minimize(0), cons + [epigraph, gv[0, 0] <= cap])
    for _ in range(BISECTION_STEPS):
        if upper - lower <= BISECTION_RTOL * upper:
            break
        cap.value = 0.5 * (lower + upper)
        _, point = attempt(capped, f"cap {cap.value:.6g}")
        if point is None:
            lower = cap.value
        else:
            best = point
            upper = float(x0v.ravel() @ np.linalg.solve(point[1], x0v.ravel()))
    return accept(best, "feasible")


def closed_loop(model: LtiModel, K) -> np.ndarray:
    K = as_mat(K, "K")
    if K.shape != (model.m, model.n):
        raise ShapeError(f"K must be {model.m}x{model.n}, got {K.shape}")
    return model.A - model.B @ K


def gcc_matrix(A_hat, B_hat, dG, K, P, cost: CostWeights) -> np.ndarray:
    """``Acl' P Acl - P + Q + K' R K`` with ``Acl = (A_hat + dA) - (B_hat + dB) K``."""
    n = A_hat.shape[0]
    Acl = A_hat + dG[:, :n] - (B_hat + dG[:, n:]) @ K
    out = Acl.T @ P @ Acl - P + cost.Q + K.T @ cost.R @ K
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class GccAudit:
    worst_max_eig: float
    violations: int
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "worst_max_eig": self.worst_max_eig,
            "violations": self.violations,
            "checked": self.checked,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def sample_uncertainty(rho: float, n: int, m: int, samples: int, rng) -> np.ndarray:
    """Uniform draws from the Frobenius ball of radius ``rho`` plus the
    ``+-rho e_i e_j'`` extremes; shape ``(k, n, n+m)``."""
    d = n * (n + m)
    g = rng.standard_normal((samples, n, n + m))
    norms = np.linalg.norm(g.reshape(samples, -1), axis=1)
    radii = rho * rng.random(samples) ** (1.0 / d)
    draws = g * (radii / norms)[:, None, None]
    extremes = np.zeros((2 * d, n, n + m))
    for k in range(d):
        i, j = divmod(k, n + m)
        extremes[2 * k, i, j] = rho
        extremes[2 * k + 1, i, j] = -rho
    return np.concatenate([np.zeros((1, n, n + m)), extremes, draws])


def verify_gcc(result: SynthesisResult, model, rho: float, cost: CostWeights, samples: int = 1000, seed=0) -> GccAudit:
    """Sample admissible ``dG`` and check the guaranteed-cost inequality for each.

    A sample violates when ``lambda_max > 1e-7 * ||P||_2``. The zero
    perturbation is always included.
    """
    A_hat, B_hat = _model_matrices(model)
    n, m = A_hat.shape[0], B_hat.shape[1]
    P, K = result.P, result.K
    tol = GCC_TOL * float(np.linalg.norm(P, 2))
    rng = np.random.default_rng(seed)
    dGs = sample_uncertainty(rho, n, m, samples, rng)
    Acl = (A_hat - B_hat @ K)[None] + dGs[:, :, :n] - dGs[:, :, n:] @ K
    mats = np.swapaxes(Acl, 1, 2) @ P @ Acl - P + cost.Q + K.T @ cost.R @ K
    mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    lam = np.linalg.eigvalsh(mats)[:, -1]
    return GccAudit(float(lam.max()), int(np.sum(lam > tol)), len(lam), tol)


def pre_congruence_form(model, rho: float, cost: CostWeights, P, K, alpha: float) -> np.ndarray:
    """The inequality in ``(P, K, alpha)`` before the congruence step."""
    A_hat, B_hat = _model_matrices(model)
    n, m = A_hat.shape[0], B_hat.shape[1]
    p = n + m
    fac = factorize_cost(cost)
    Cbar = rho * np.vstack([np.eye(n), -K])
    Z = np.zeros
    rows = [
        [-np.eye(p) / alpha, Z((p, p)), Z((p, n)), Cbar, Z((p, n))],
        [Z((p, p)), -np.eye(p), Z((p, n)), fac.C_c - fac.D_cu @ K, Z((p, n))],
        [Z((n, p)), Z((n, p)), -np.linalg.inv(P), A_hat - B_hat @ K, np.eye(n)],
        [Cbar.T, (fac.C_c - fac.D_cu @ K).T, (A_hat - B_hat @ K).T, -P, Z((n, n))],
        [Z((n, p)), Z((n, p)), np.eye(n), Z((n, n)), -alpha * np.eye(n)],
    ]
    return np.block(rows)


def congruence_transform(matrix, P, alpha: float, n: int, m: int) -> np.ndarray:
    """``T' matrix T`` with ``T = diag(I, I, I, P^{-1}, I/alpha)``."""
    p = n + m
    T = scipy.linalg.block_diag(np.eye(p), np.eye(p), np.eye(n), np.linalg.inv(P), np.eye(n) / alpha)
    return T.T @ matrix @ T


def s_procedure_form(model, rho: float, cost: CostWeights, P, K, alpha: float) -> np.ndarray:
    """Quadratic form in ``[x; w]`` combining the value decrease with the
    uncertainty constraint ``w'w <= z'z`` through multiplier ``alpha``.

    Nonpositive whenever the synthesis LMI holds with ``alpha = 1 / beta``.
    """
    A_hat, B_hat = _model_matrices(model)
    n = A_hat.shape[0]
    A0 = A_hat - B_hat @ K
    Cbar = rho * np.vstack([np.eye(n), -K])
    stage = cost.Q + K.T @ cost.R @ K
    top_left = A0.T @ P @ A0 - P + stage + alpha * Cbar.T @ Cbar
    out = np.block([[top_left, A0.T @ P], [P @ A0, P - alpha * np.eye(n)]])
    return 0.5 * (out + out.T)
