"""Memoryless uniform (floor) quantization of trajectory data.

A quantizer with range ``[s_min, s_max]`` and word-length ``b`` has resolution
``eps_q = (s_max - s_min) / 2**b`` and maps ``s`` to the largest grid level
``s_min + k * eps_q`` not above it, clamped to the range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .sysid import DataMatrices

BUDGET_MODES = ("half", "full")


@dataclass(frozen=True)
class QuantizerSpec:
    s_min: float
    s_max: float
    bits: int

    def __post_init__(self):
        if not (math.isfinite(self.s_min) and math.isfinite(self.s_max)) or self.s_min >= self.s_max:
            raise InvalidInputError(f"invalid quantizer range [{self.s_min}, {self.s_max}]")
        if int(self.bits) != self.bits or self.bits < 1:
            raise InvalidInputError(f"word-length must be a positive integer, got {self.bits}")
        object.__setattr__(self, "bits", int(self.bits))

    @property
    def eps(self) -> float:
        return (self.s_max - self.s_min) / 2.0**self.bits

    @property
    def top_level(self) -> float:
        return self.s_min + self.eps * math.floor((self.s_max - self.s_min) / self.eps)

    def with_bits(self, bits: int) -> "QuantizerSpec":
        return QuantizerSpec(self.s_min, self.s_max, bits)


def quantize_array(values, s_min, s_max, bits) -> np.ndarray:
    """Vectorized quantizer; ``s_min``, ``s_max`` and ``bits`` broadcast against ``values``.

    The grid index is corrected by one step in either direction so the result
    is exactly the largest computed level ``s_min + k*eps`` that does not
    exceed the input; this keeps the map idempotent in floating point.
    """
    s = np.asarray(values, dtype=float)
    lo = np.asarray(s_min, dtype=float)
    width = np.asarray(s_max, dtype=float) - lo
    eps = width / np.exp2(np.asarray(bits, dtype=float))
    k_top = np.floor(width / eps)
    k = np.clip(np.floor((s - lo) / eps), 0.0, k_top)
    k = np.where((lo + (k + 1) * eps <= s) & (k < k_top), k + 1, k)
    k = np.where((lo + k * eps > s) & (k > 0), k - 1, k)
    return lo + k * eps


def quantize_scalar(s: float, q: QuantizerSpec) -> float:
    return float(quantize_array(s, q.s_min, q.s_max, q.bits))


@dataclass(frozen=True)
class ChannelQuantizers:
    """One quantizer per state component and one per input component."""

    state_specs: tuple
    input_specs: tuple

    def __post_init__(self):
        object.__setattr__(self, "state_specs", tuple(self.state_specs))
        object.__setattr__(self, "input_specs", tuple(self.input_specs))
        if not self.state_specs or not self.input_specs:
            raise InvalidInputError("need at least one state and one input quantizer")

    @property
    def n(self) -> int:
        return len(self.state_specs)

    @property
    def m(self) -> int:
        return len(self.input_specs)

    @classmethod
    def uniform(cls, bits: int, state_ranges, input_ranges) -> "ChannelQuantizers":
        return cls(
            tuple(QuantizerSpec(float(lo), float(hi), bits) for lo, hi in state_ranges),
            tuple(QuantizerSpec(float(lo), float(hi), bits) for lo, hi in input_ranges),
        )

    def with_bits(self, bits: int) -> "ChannelQuantizers":
        return ChannelQuantizers(
            tuple(q.with_bits(bits) for q in self.state_specs),
            tuple(q.with_bits(bits) for q in self.input_specs),
        )

    def _columns(self, specs):
        lo = np.array([[q.s_min] for q in specs])
        hi = np.array([[q.s_max] for q in specs])
        bits = np.array([[q.bits] for q in specs])
        return lo, hi, bits

    def quantize_states(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if states.shape[0] != self.n:
            raise ShapeError(f"states have {states.shape[0]} rows, quantizers cover {self.n}")
        return quantize_array(states, *self._columns(self.state_specs))

    def quantize_inputs(self, inputs) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape[0] != self.m:
            raise ShapeError(f"inputs have {inputs.shape[0]} rows, quantizers cover {self.m}")
        return quantize_array(inputs, *self._columns(self.input_specs))

    def saturation_count(self, states, inputs) -> int:
        """Number of entries outside their quantizer range (should be zero)."""
        count = 0
        for arr, specs in ((states, self.state_specs), (inputs, self.input_specs)):
            lo, hi, _ = self._columns(specs)
            arr = np.asarray(arr, dtype=float)
            count += int(np.sum((arr < lo) | (arr > hi)))
        return count

    def to_config(self, budget: str = "half") -> dict:
        bits = {q.bits for q in self.state_specs + self.input_specs}
        cfg = {
            "bits": self.state_specs[0].bits,
            "state_ranges": [[q.s_min, q.s_max] for q in self.state_specs],
            "input_ranges": [[q.s_min, q.s_max] for q in self.input_specs],
            "budget": budget,
        }
        if len(bits) > 1:
            cfg["state_bits"] = [q.bits for q in self.state_specs]
            cfg["input_bits"] = [q.bits for q in self.input_specs]
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "ChannelQuantizers":
        try:
            bits = int(cfg["bits"])
            sr, ir = cfg["state_ranges"], cfg["input_ranges"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed quantizer config: {exc}") from exc
        sb = cfg.get("state_bits", [bits] * len(sr))
        ib = cfg.get("input_bits", [bits] * len(ir))
        if len(sb) != len(sr) or len(ib) != len(ir):
            raise ShapeError("per-component bit overrides do not match the number of ranges")
        return cls(
            tuple(QuantizerSpec(float(lo), float(hi), int(b)) for (lo, hi), b in zip(sr, sb)),
            tuple(QuantizerSpec(float(lo), float(hi), int(b)) for (lo, hi), b in zip(ir, ib)),
        )


@dataclass(frozen=True)
class ErrorBudget:
    """Per-component worst-case errors and their aggregates."""

    e_x: np.ndarray
    e_u: np.ndarray

    def __post_init__(self):
        for name in ("e_x", "e_u"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} must be finite and non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def eps_x(self) -> float:
        return float(np.linalg.norm(self.e_x))

    @property
    def eps_u(self) -> float:
        return float(np.linalg.norm(self.e_u))

    @property
    def eps(self) -> float:
        return float(math.hypot(self.eps_x, self.eps_u))

    def to_dict(self) -> dict:
        return {
            "e_x": self.e_x.tolist(),
            "e_u": self.e_u.tolist(),
            "eps_x": self.eps_x,
            "eps_u": self.eps_u,
            "eps": self.eps,
        }

    @classmethod
    def zero(cls, n: int, m: int) -> "ErrorBudget":
        return cls(np.zeros(n), np.zeros(m))


def budget_from_resolution(ch: ChannelQuantizers, mode: str = "half") -> ErrorBudget:
    """Budget known before any data is seen: ``eps_q / 2`` per component, or
    ``eps_q`` with ``mode="full"`` (the floor quantizer's actual one-sided bound)."""
    if mode not in BUDGET_MODES:
        raise InvalidInputError(f"budget mode must be one of {BUDGET_MODES}, got {mode!r}")
    factor = 0.5 if mode == "half" else 1.0
    return ErrorBudget(
        np.array([factor * q.eps for q in ch.state_specs]),
        np.array([factor * q.eps for q in ch.input_specs]),
    )


def budget_from_errors(E_x, E_u) -> ErrorBudget:
    """Realized budget: row-wise sup of the absolute quantization errors.

    Needs the unquantized data, so it is only available to audits.
    """
    return ErrorBudget(np.abs(np.asarray(E_x)).max(axis=1), np.abs(np.asarray(E_u)).max(axis=1))


@dataclass(frozen=True)
class QuantizedData:
    data: DataMatrices
    budget: ErrorBudget
    E_Xplus: np.ndarray
    E_Psi: np.ndarray


def quantize_dataset(data: DataMatrices, ch: ChannelQuantizers, budget: str = "half") -> QuantizedData:
    if data.n != ch.n or data.m != ch.m:
        raise ShapeError(
            f"dataset has (n, m) = ({data.n}, {data.m}) but quantizers cover ({ch.n}, {ch.m})"
        )
    qdata = DataMatrices(
        ch.quantize_states(data.X), ch.quantize_states(data.Xplus), ch.quantize_inputs(data.U)
    )
    return QuantizedData(
        qdata,
        budget_from_resolution(ch, budget),
        data.Xplus - qdata.Xplus,
        data.Psi - qdata.Psi,
    )


def quantize_trajectories(trajectories, ch: ChannelQuantizers) -> list:
    return [(ch.quantize_states(x), ch.quantize_inputs(u)) for x, u in trajectories]


def scale_dataset(data: DataMatrices, c: float) -> DataMatrices:
    if not (c > 0 and math.isfinite(c)):
        raise InvalidInputError(f"scale factor must be positive, got {c}")
    return DataMatrices(c * data.X, c * data.Xplus, c * data.U)


def scaling_factor(data: DataMatrices, s_max: float, margin: float = 0.0) -> float:
    """Largest ``c <= 1`` with ``c * max|entry| <= s_max - margin``."""
    peak = max(np.abs(data.X).max(), np.abs(data.Xplus).max(), np.abs(data.U).max())
    if s_max - margin <= 0:
        raise InvalidInputError("s_max - margin must be positive")
    if peak == 0:
        return 1.0
    return min(1.0, (s_max - margin) / peak)
