"""Trajectory generation, the two benchmark plants and the Monte-Carlo sweep."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import stats

from .bound import check_robust_pe, compute_bound
from .errors import InvalidInputError, ShapeError
from .linalg import CostWeights, LtiModel, spectral_radius
from .quantizer import ChannelQuantizers, quantize_dataset, scale_dataset
from .synthesis import closed_loop, synthesize, verify_gcc
from .sysid import DataMatrices, build_data_matrices, identify, relative_error, relative_error_2

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Preset:
    name: str
    model: LtiModel
    cost: CostWeights
    x0_regulation: tuple
    train_x0_box: tuple
    train_u_box: tuple
    dt: float = float("nan")

    @classmethod
    def custom(cls, model: LtiModel, name: str = "custom", x0_box=0.1, u_box=0.1, cost=None, x0=None):
        n, m = model.n, model.m
        return cls(
            name=name,
            model=model,
            cost=cost or CostWeights.identity(n, m),
            x0_regulation=tuple(x0) if x0 is not None else tuple([1.0] + [0.0] * (n - 1)),
            train_x0_box=tuple((-x0_box, x0_box) for _ in range(n)),
            train_u_box=tuple((-u_box, u_box) for _ in range(m)),
        )


DC_MOTOR = Preset(
    name="dc_motor",
    model=LtiModel(
        [[1.000, 0.0091, 0.0], [0.0, 0.8187, 0.0071], [0.0, -0.0035, 0.6065]],
        [[0.0, 0.0047], [0.0020, 0.9063], [0.3935, -0.0020]],
    ),
    cost=CostWeights.identity(3, 2),
    x0_regulation=(1.0, 0.0, 0.0),
    train_x0_box=((-0.1, 0.1),) * 3,
    train_u_box=((-0.2, 0.0), (-0.1, 0.1)),
    dt=0.01,
)

MASS_SPRING_DAMPER = Preset(
    name="mass_spring_damper",
    model=LtiModel([[0.9931, 0.0883], [-0.1324, 0.7724]], [[0.0046], [0.0883]]),
    cost=CostWeights.identity(2, 1),
    x0_regulation=(1.0, 1.0),
    train_x0_box=((-0.2, 0.2),) * 2,
    train_u_box=((-0.1, 0.1),),
    dt=0.1,
)

PRESETS = {p.name: p for p in (DC_MOTOR, MASS_SPRING_DAMPER)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def simulate_open_loop(model: LtiModel, x0, inputs) -> np.ndarray:
    """States ``n x (L+1)`` of ``x_{t+1} = A x_t + B u_t`` driven by ``inputs`` (``m x L``)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    inputs = np.asarray(inputs, dtype=float)
    if x0.shape != (model.n,) or inputs.ndim != 2 or inputs.shape[0] != model.m:
        raise ShapeError(f"expected x0 of length {model.n} and inputs of shape ({model.m}, L)")
    L = inputs.shape[1]
    states = np.empty((model.n, L + 1))
    states[:, 0] = x0
    for t in range(L):
        states[:, t + 1] = model.A @ states[:, t] + model.B @ inputs[:, t]
    return states


def simulate_closed_loop(model: LtiModel, K, x0, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``u_t = -K x_t`` to the model for ``N`` steps; returns ``(n x (N+1), m x N)``."""
    K = np.asarray(K, dtype=float)
    if K.shape != (model.m, model.n):
        raise ShapeError(f"K must be {model.m}x{model.n}, got {K.shape}")
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape != (model.n,):
        raise ShapeError(f"x0 must have length {model.n}")
    states = np.empty((model.n, N + 1))
    inputs = np.empty((model.m, N))
    states[:, 0] = x
    for t in range(N):
        u = -K @ states[:, t]
        inputs[:, t] = u
        states[:, t + 1] = model.A @ states[:, t] + model.B @ u
    return states, inputs


def finite_cost(states, inputs, cost: CostWeights) -> float:
    """``sum_{t<N} x_t' Q x_t + u_t' R u_t`` over the ``N`` input columns."""
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or states.ndim != 2 or states.shape[1] < inputs.shape[1]:
        raise ShapeError("need at least as many state columns as input columns")
    N = inputs.shape[1]
    xs = states[:, :N]
    return float(np.einsum("it,ij,jt->", xs, cost.Q, xs) + np.einsum("it,ij,jt->", inputs, cost.R, inputs))


def generate_training(preset: Preset, trajectories: int, steps: int, rng) -> list:
    """Open-loop runs from uniform initial states with a fresh uniform input each step."""
    model = preset.model
    xbox = np.array(preset.train_x0_box, dtype=float)
    ubox = np.array(preset.train_u_box, dtype=float)
    x0 = rng.uniform(xbox[:, 0], xbox[:, 1], size=(trajectories, model.n))
    u = rng.uniform(ubox[:, 0], ubox[:, 1], size=(trajectories, steps, model.m))
    u = np.swapaxes(u, 1, 2)  # (traj, m, L)
    x = np.empty((trajectories, model.n, steps + 1))
    x[:, :, 0] = x0
    for t in range(steps):
        x[:, :, t + 1] = x[:, :, t] @ model.A.T + u[:, :, t] @ model.B.T
    return [(x[k], u[k]) for k in range(trajectories)]


def pilot_ranges(preset: Preset, trajectories: int, steps: int, oversample: int = 10, inflate: float = 0.1):
    """Symmetric per-component ranges ``+-(1 + inflate) * max|value|`` from a seed-0 pilot run."""
    return _pilot_ranges(preset, trajectories, steps, oversample, inflate)


@lru_cache(maxsize=32)
def _pilot_ranges(preset, trajectories, steps, oversample, inflate):
    data = generate_training(preset, oversample * trajectories, steps, np.random.default_rng(0))
    xpeak = np.max([np.abs(x).max(axis=1) for x, _ in data], axis=0)
    upeak = np.max([np.abs(u).max(axis=1) for _, u in data], axis=0)
    f = 1.0 + inflate
    return (
        tuple((-f * p, f * p) for p in xpeak.tolist()),
        tuple((-f * p, f * p) for p in upeak.tolist()),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "dc_motor"
    model: LtiModel | None = None  # overrides the preset plant when given
    trajectories: int = 150
    steps: int = 100
    repetitions: int = 50
    bits: tuple = (8, 10, 12, 14)
    seed: int = 0
    state_ranges: tuple | None = None
    input_ranges: tuple | None = None
    horizon: int = 2000
    budget: str = "half"
    gcc_samples: int = 1000
    workers: int = 1
    synthesize: bool = True
    keep_trajectories: bool = False

    def __post_init__(self):
        for name in ("trajectories", "steps", "repetitions", "horizon"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be positive")
        bits = tuple(int(b) for b in self.bits)
        if not bits or list(bits) != sorted(set(bits)) or bits[0] < 1:
            raise InvalidInputError(f"bit list must be positive, distinct and ascending: {self.bits}")
        object.__setattr__(self, "bits", bits)

    def resolved_preset(self) -> Preset:
        if self.model is not None:
            return Preset.custom(self.model)
        return get_preset(self.preset)

    def resolved_ranges(self):
        if self.state_ranges is not None and self.input_ranges is not None:
            return tuple(map(tuple, self.state_ranges)), tuple(map(tuple, self.input_ranges))
        return pilot_ranges(self.resolved_preset(), self.trajectories, self.steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = None if self.model is None else self.model.to_dict()
        d["bits"] = list(self.bits)
        sr, ir = self.resolved_ranges()
        d["state_ranges"] = [list(r) for r in sr]
        d["input_ranges"] = [list(r) for r in ir]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("model") is not None:
            d["model"] = LtiModel.from_dict(d["model"])
        for key in ("state_ranges", "input_ranges"):
            if d.get(key) is not None:
                d[key] = tuple(tuple(r) for r in d[key])
        d["bits"] = tuple(d.get("bits", (8, 10, 12, 14)))
        return cls(**d)


RESULT_COLUMNS = (
    "rep", "bits", "rel_err_A", "rel_err_B", "rho", "deltaG_fro", "robust_pe_margin",
    "guaranteed_cost", "finite_cost", "spec_radius", "status",
    "rel_err_A_2", "rel_err_B_2", "deltaG_2", "gcc_violations", "gcc_worst", "saturated", "scale_c",
    "solver",
)


def fit_to_ranges(data: DataMatrices, state_ranges, input_ranges) -> tuple[DataMatrices, float]:
    """Scale the whole dataset by one factor ``c <= 1`` so no entry leaves its range.

    The scaled data obey the same dynamics, so identification is unaffected.
    """
    c = 1.0
    for block, ranges in ((np.hstack([data.X, data.Xplus]), state_ranges), (data.U, input_ranges)):
        for row, (lo, hi) in zip(block, ranges):
            top, bottom = row.max(), row.min()
            if top > hi and top > 0:
                c = min(c, hi / top)
            if bottom < lo and bottom < 0:
                c = min(c, lo / bottom)
    if c < 1.0:
        data = scale_dataset(data, c)
    return data, c


def rep_rng(seed: int, rep: int, *extra) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, *extra)))


def _empty_row(rep, bits):
    row = {k: math.nan for k in RESULT_COLUMNS}
    row.update(rep=rep, bits=bits, status="", gcc_violations=-1, saturated=0, solver="")
    return row


def run_repetition(cfg: ExperimentConfig, rep: int, ranges=None):
    """All word-lengths for one repetition; the training set is shared across bits."""
    preset = cfg.resolved_preset()
    truth = preset.model
    sr, ir = ranges if ranges is not None else cfg.resolved_ranges()
    trajs = generate_training(preset, cfg.trajectories, cfg.steps, rep_rng(cfg.seed, rep))
    data, c = fit_to_ranges(build_data_matrices(trajs), sr, ir)
    rows, portraits = [], {}
    for b in cfg.bits:
        row = _empty_row(rep, b)
        try:
            ch = ChannelQuantizers.uniform(b, sr, ir)
            row["saturated"] = ch.saturation_count(np.hstack([data.X, data.Xplus]), data.U)
            row["scale_c"] = c
            qd = quantize_dataset(data, ch, cfg.budget)
            est = identify(qd.data)
            row["rel_err_A"] = relative_error(truth.A, est.A_hat)
            row["rel_err_B"] = relative_error(truth.B, est.B_hat)
            row["rel_err_A_2"] = relative_error_2(truth.A, est.A_hat)
            row["rel_err_B_2"] = relative_error_2(truth.B, est.B_hat)
            dG = truth.G - est.G_hat
            row["deltaG_fro"] = float(np.linalg.norm(dG))
            row["deltaG_2"] = float(np.linalg.norm(dG, 2))
            ok, margin = check_robust_pe(qd.data, qd.budget)
            row["robust_pe_margin"] = margin
            if not ok:
                row["status"] = "pe_violated"
                rows.append(row)
                continue
            rep_bound = compute_bound(est, qd.data, qd.budget)
            row["rho"] = rep_bound.rho
            if not cfg.synthesize:
                row["status"] = "ok"
                rows.append(row)
                continue
            res = synthesize(est, rep_bound.rho, preset.cost, x0=preset.x0_regulation)
            row["solver"] = res.solver or ""
            if not res.feasible:
                row["status"] = res.solver_status
                rows.append(row)
                continue
            row["guaranteed_cost"] = res.guaranteed_cost_x0
            row["spec_radius"] = spectral_radius(closed_loop(truth, res.K))
            states, inputs = simulate_closed_loop(truth, res.K, preset.x0_regulation, cfg.horizon)
            row["finite_cost"] = finite_cost(states, inputs, preset.cost)
            audit = verify_gcc(res, est, rep_bound.rho, preset.cost, cfg.gcc_samples, rep_rng(cfg.seed, rep, b))
            row["gcc_violations"] = audit.violations
            row["gcc_worst"] = audit.worst_max_eig
            row["status"] = "ok"
            if cfg.keep_trajectories:
                portraits[(rep, b)] = states[:, :200]
        except Exception as exc:  # a failing cell is recorded, never fatal
            log.warning("cell (rep=%d, bits=%d) failed: %s", rep, b, exc)
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    return rows, portraits


@dataclass
class ExperimentResults:
    config: ExperimentConfig
    rows: list
    portraits: dict = field(default_factory=dict)

    def column(self, name, bits=None, status=None) -> np.ndarray:
        sel = [
            r[name] for r in self.rows
            if (bits is None or r["bits"] == bits) and (status is None or r["status"] == status)
        ]
        return np.array(sel, dtype=float)

    def rows_for(self, bits):
        return [r for r in self.rows if r["bits"] == bits]

    def summary(self) -> dict:
        per_bits = {}
        for b in self.config.bits:
            rows = self.rows_for(b)
            pe = [r for r in rows if not math.isnan(r["rho"])]
            ok = [r for r in rows if r["status"] == "ok" and not math.isnan(r["guaranteed_cost"])]
            entry = {"cells": len(rows), "robust_pe_ok": len(pe), "feasible": len(ok)}
            for key in ("rel_err_A", "rel_err_B", "rho", "deltaG_fro"):
                vals = np.array([r[key] for r in rows if not math.isnan(r[key])])
                entry[key] = _stats(vals)
                entry[f"log10_{key}"] = _stats(np.log10(vals[vals > 0]))
            gc = np.array([r["guaranteed_cost"] for r in ok])
            fc = np.array([r["finite_cost"] for r in ok])
            entry["guaranteed_cost"] = _stats(gc)
            entry["finite_cost"] = _stats(fc)
            entry["cost_gap"] = _stats(gc - fc)
            entry["bound_violations"] = sum(1 for r in pe if r["deltaG_fro"] > r["rho"])
            per_bits[str(b)] = entry
        slopes = {}
        for key in ("rel_err_A", "rel_err_B", "rho"):
            xs, ys = [], []
            for b in self.config.bits:
                mean = per_bits[str(b)][f"log10_{key}"]["mean"]
                if mean is not None:
                    xs.append(b)
                    ys.append(mean)
            if len(set(xs)) >= 2:
                slope, intercept, r2 = fit_slope(xs, ys)
                slopes[key] = {"slope": slope, "intercept": intercept, "r2": r2, "bits": xs}
        return {"config": self.config.to_dict(), "per_bits": per_bits, "slopes": slopes}


def _stats(vals: np.ndarray) -> dict:
    if vals.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(vals.mean()), "std": float(vals.std()), "n": int(vals.size)}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResults:
    """Every ``(rep, bits)`` cell of the sweep, sorted by key."""
    ranges = cfg.resolved_ranges()
    reps = range(cfg.repetitions)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(run_repetition, [cfg] * len(reps), reps, [ranges] * len(reps)))
    else:
        outs = [run_repetition(cfg, r, ranges) for r in reps]
    rows, portraits = [], {}
    for r_rows, r_port in outs:
        rows.extend(r_rows)
        portraits.update(r_port)
    rows.sort(key=lambda r: (r["rep"], r["bits"]))
    return ExperimentResults(cfg, rows, portraits)


def pe_scan(cfg: ExperimentConfig, bits) -> np.ndarray:
    """Robust-PE margins, shape ``(repetitions, len(bits))``, on the sweep's training sets."""
    sr, ir = cfg.resolved_ranges()
    preset = cfg.resolved_preset()
    out = np.empty((cfg.repetitions, len(bits)))
    for r in range(cfg.repetitions):
        data = build_data_matrices(generate_training(preset, cfg.trajectories, cfg.steps, rep_rng(cfg.seed, r)))
        data, _ = fit_to_ranges(data, sr, ir)
        for j, b in enumerate(bits):
            qd = quantize_dataset(data, ChannelQuantizers.uniform(b, sr, ir), cfg.budget)
            out[r, j] = check_robust_pe(qd.data, qd.budget)[1]
    return out


def fit_slope(xs, ys) -> tuple[float, float, float]:
    """Ordinary least-squares line; returns ``(slope, intercept, r**2)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or np.unique(xs).size < 2:
        raise InvalidInputError("need at least two distinct abscissae")
    fit = stats.linregress(xs, ys)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
