"""Self-paced weighting.

Joint minimization of w*loss + gamma*(w^2/2 - w) over w in [0,1] has the
closed form w* = max(0, 1 - loss/gamma): instances whose loss reaches the
pace parameter gamma get weight zero and are treated as mislabeled, easy
instances get weight near one, and raising gamma admits harder instances.
Gamma itself must stay inside (0, loss_upper_bound) or the mechanism
degenerates (nothing selected / everything selected).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class SampleWeights:
    """Per-instance weights in [0,1] plus the pace parameter they came from."""

    values: np.ndarray
    gamma: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not self.gamma > 0:
            raise ParameterError(f"gamma={self.gamma} must be positive")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ParameterError("sample weights must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PaceSchedule:
    """How gamma evolves over the self-paced epochs."""

    mode: str = "fixed"  # "fixed" or "linear_ramp"
    gamma_start: float = 1.0
    gamma_end: float | None = None
    ramp_epochs: int = 1

    def __post_init__(self):
        if self.mode not in ("fixed", "linear_ramp"):
            raise ParameterError(f"unknown pace mode {self.mode!r}")
        if not self.gamma_start > 0:
            raise ParameterError(f"gamma_start={self.gamma_start} must be positive")
        end = self.gamma_start if self.gamma_end is None else self.gamma_end
        if end < self.gamma_start:
            raise ParameterError("gamma_end must be >= gamma_start")
        if self.ramp_epochs < 1:
            raise ParameterError("ramp_epochs must be >= 1")

    @property
    def resolved_end(self) -> float:
        return self.gamma_start if self.gamma_end is None else self.gamma_end


def loss_upper_bound(n_modalities: int, r: float) -> float:
    """Largest possible per-instance loss, attained when every v_m = 0."""
    return n_modalities * (r * r - r + 1.0) / r


def gamma_bounds(n_modalities: int, r: float) -> tuple[float, float]:
    """Open admissible interval for gamma: (0, M*(r^2 - r + 1)/r)."""
    if n_modalities < 1:
        raise ParameterError(f"modality count {n_modalities} must be >= 1")
    if not 0.0 < r <= 1.0:
        raise ParameterError(f"weight factor r={r} outside (0, 1]")
    return 0.0, loss_upper_bound(n_modalities, r)


def validate_schedule(schedule: PaceSchedule, n_modalities: int, r: float) -> None:
    """Reject schedules whose gamma could leave the admissible interval."""
    _, upper = gamma_bounds(n_modalities, r)
    if not schedule.resolved_end < upper:
        raise ParameterError(
            f"gamma reaches {schedule.resolved_end}, outside (0, {upper}) for "
            f"M={n_modalities}, r={r}"
        )


def optimal_weight(loss: float, gamma: float) -> float:
    """Closed-form minimizer of w*loss + gamma*(w^2/2 - w) over [0, 1]."""
    if loss < 0:
        raise ParameterError(f"per-instance loss {loss} must be non-negative")
    if not gamma > 0:
        raise ParameterError(f"gamma={gamma} must be positive")
    return max(0.0, 1.0 - loss / gamma)


def regularizer(w: float, gamma: float) -> float:
    """Linear-interpolation self-paced penalty gamma*(w^2/2 - w)."""
    if not 0.0 <= w <= 1.0:
        raise ParameterError(f"weight {w} outside [0, 1]")
    if not gamma > 0:
        raise ParameterError(f"gamma={gamma} must be positive")
    return gamma * (0.5 * w * w - w)


def gamma_at(schedule: PaceSchedule, epoch: int) -> float:
    """Gamma for the given epoch of the self-paced phase (0-based)."""
    if epoch < 0:
        raise ParameterError(f"epoch {epoch} must be >= 0")
    if schedule.mode == "fixed":
        return schedule.gamma_start
    frac = min(1.0, epoch / schedule.ramp_epochs)
    return schedule.gamma_start + (schedule.resolved_end - schedule.gamma_start) * frac


def refresh_weights(losses: np.ndarray, gamma: float) -> SampleWeights:
    """One-pass optimal weights for the whole training set, parameters frozen."""
    losses = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise ParameterError("per-instance losses must be finite")
    if losses.size and losses.min() < 0:
        raise ParameterError("per-instance losses must be non-negative")
    if not gamma > 0:
        raise ParameterError(f"gamma={gamma} must be positive")
    return SampleWeights(np.maximum(0.0, 1.0 - losses / gamma), gamma)


def binarize_weights(weights: SampleWeights) -> SampleWeights:
    """Progressive-learning ablation: every admitted instance gets full weight."""
    values = np.where(weights.values > 0, 1.0, 0.0)
    return SampleWeights(values, weights.gamma)


def partition(weights: SampleWeights) -> tuple[np.ndarray, np.ndarray]:
    """(clean_indices, noisy_indices): noisy means weight exactly zero."""
    noisy = np.flatnonzero(weights.values == 0.0)
    clean = np.flatnonzero(weights.values != 0.0)
    return clean, noisy
