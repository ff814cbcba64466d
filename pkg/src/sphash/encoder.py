"""Per-modality hash functions.

Each modality owns a one-hidden-layer MLP with tanh activations whose output
is a relaxed code in (-1, 1)^L; taking the sign of the relaxed code gives the
binary code used for retrieval. One fixed random binary center per class
serves as the aggregation target; centers are never updated by training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParameterError, ShapeError
from .seeding import spawn_rng


@dataclass
class ModalityParams:
    """Weights of one modality's encoder: d -> hidden -> code."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "ModalityParams":
        return ModalityParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


@dataclass
class HashEncoderParams:
    """All modality encoders plus the shared architecture sizes."""

    modalities: list[ModalityParams]
    hidden_dim: int
    code_length: int

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(mod.input_dim for mod in self.modalities)

    def copy(self) -> "HashEncoderParams":
        return HashEncoderParams(
            [mod.copy() for mod in self.modalities], self.hidden_dim, self.code_length
        )


@dataclass
class ModalityGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


def init_params(dims, hidden_dim: int, code_length: int, seed: int) -> HashEncoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if hidden_dim < 1 or code_length < 1:
        raise ParameterError("hidden_dim and code_length must be positive")
    if any(d < 1 for d in dims):
        raise ParameterError(f"feature dims must be positive, got {tuple(dims)}")
    rng = spawn_rng(seed, "encoder-init")
    mods = []
    for d in dims:
        bound1 = 1.0 / np.sqrt(d)
        bound2 = 1.0 / np.sqrt(hidden_dim)
        mods.append(
            ModalityParams(
                w1=rng.uniform(-bound1, bound1, size=(d, hidden_dim)),
                b1=np.zeros(hidden_dim),
                w2=rng.uniform(-bound2, bound2, size=(hidden_dim, code_length)),
                b2=np.zeros(code_length),
            )
        )
    return HashEncoderParams(mods, hidden_dim, code_length)


def encode(mod: ModalityParams, x: np.ndarray) -> np.ndarray:
    """Relaxed codes tanh(tanh(x W1 + b1) W2 + b2); rows map independently."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != mod.input_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != encoder dim {mod.input_dim}")
    hidden = np.tanh(x @ mod.w1 + mod.b1)
    return np.tanh(hidden @ mod.w2 + mod.b2)


def backward(mod: ModalityParams, x: np.ndarray, grad_codes: np.ndarray) -> ModalityGrads:
    """Parameter gradients of sum(grad_codes * codes) for a batch.

    grad_codes holds the upstream gradient of the loss with respect to the
    relaxed codes; the chain rule runs through both tanh layers.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    grad_codes = np.atleast_2d(np.asarray(grad_codes, dtype=np.float64))
    if x.shape[-1] != mod.input_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != encoder dim {mod.input_dim}")
    if grad_codes.shape != (x.shape[0], mod.w2.shape[1]):
        raise ShapeError(
            f"grad shape {grad_codes.shape} != codes shape {(x.shape[0], mod.w2.shape[1])}"
        )
    hidden = np.tanh(x @ mod.w1 + mod.b1)
    codes = np.tanh(hidden @ mod.w2 + mod.b2)

    dz2 = grad_codes * (1.0 - codes**2)
    dhidden = dz2 @ mod.w2.T
    dz1 = dhidden * (1.0 - hidden**2)
    return ModalityGrads(
        w1=x.T @ dz1,
        b1=dz1.sum(axis=0),
        w2=hidden.T @ dz2,
        b2=dz2.sum(axis=0),
    )


def binarize(codes: np.ndarray) -> np.ndarray:
    """Componentwise sign with the tie 0.0 -> +1; output int8 in {-1,+1}."""
    codes = np.asarray(codes)
    if not np.all(np.isfinite(codes)):
        raise ParameterError("cannot binarize non-finite codes")
    return np.where(codes >= 0, 1, -1).astype(np.int8)


def init_centers(class_count: int, code_length: int, seed: int) -> np.ndarray:
    """K distinct random {-1,+1}^L rows, fixed for the whole run."""
    if class_count < 1 or code_length < 1:
        raise ParameterError("class_count and code_length must be positive")
    if 2**code_length < class_count:
        raise CapacityError(
            f"cannot place {class_count} distinct centers in {{-1,+1}}^{code_length}"
        )
    rng = spawn_rng(seed, "hash-centers")
    centers = np.empty((class_count, code_length), dtype=np.int8)
    seen = set()
    for row in range(class_count):
        while True:
            cand = rng.integers(0, 2, size=code_length, dtype=np.int8) * 2 - 1
            key = cand.tobytes()
            if key not in seen:
                seen.add(key)
                centers[row] = cand
                break
    return centers
