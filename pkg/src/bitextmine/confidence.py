"""Calibration of raw dot-product scores into comparable [0, 1] confidences.

A raw pair score is only meaningful relative to other candidates for the same
source sentence.  The confidence head fixes that by computing a per-source
scale and shift from the source embedding features [u, u^2] and squashing
scale*s + shift through a sigmoid.  Because the head reads nothing from the
target side, it can never change which targets are retrieved or their order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, DegenerateBatch, DimensionMismatch


@dataclass
class ConfidenceHead:
    """Affine scale/shift weights over [u, u^2]; dropout applies only in training."""

    scale_weights: np.ndarray  # [2 * output_dim]
    scale_bias: np.ndarray     # [1]
    shift_weights: np.ndarray  # [2 * output_dim]
    shift_bias: np.ndarray     # [1]
    dropout_rate: float = 0.4

    def __post_init__(self) -> None:
        if self.scale_weights.shape != self.shift_weights.shape:
            raise DimensionMismatch("scale and shift weights must have equal length")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigInvalid(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def copy(self) -> "ConfidenceHead":
        return ConfidenceHead(
            scale_weights=self.scale_weights.copy(),
            scale_bias=self.scale_bias.copy(),
            shift_weights=self.shift_weights.copy(),
            shift_bias=self.shift_bias.copy(),
            dropout_rate=self.dropout_rate,
        )

    def astype(self, dtype) -> "ConfidenceHead":
        return ConfidenceHead(
            scale_weights=self.scale_weights.astype(dtype),
            scale_bias=self.scale_bias.astype(dtype),
            shift_weights=self.shift_weights.astype(dtype),
            shift_bias=self.shift_bias.astype(dtype),
            dropout_rate=self.dropout_rate,
        )


@dataclass
class HeadGrads:
    scale_weights: np.ndarray
    scale_bias: np.ndarray
    shift_weights: np.ndarray
    shift_bias: np.ndarray


def sigmoid(x):
    """Numerically stable logistic function for scalars or arrays."""
    a = np.asarray(x)
    if a.dtype.kind != "f":
        a = a.astype(np.float64)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def confidence_features(u: np.ndarray) -> np.ndarray:
    """Concatenate the source embedding with its pointwise square."""
    u = np.asarray(u)
    return np.concatenate([u, u * u], axis=-1)


def scale_and_shift(u: np.ndarray, head: ConfidenceHead) -> tuple[float, float]:
    """Per-source calibration terms computed from [u, u^2] (no dropout)."""
    feats = confidence_features(u)
    if feats.shape[-1] != head.scale_weights.shape[0]:
        raise DimensionMismatch(
            f"head expects feature length {head.scale_weights.shape[0]}, got {feats.shape[-1]}"
        )
    scale = float(feats @ head.scale_weights + head.scale_bias[0])
    shift = float(feats @ head.shift_weights + head.shift_bias[0])
    return scale, shift


def calibrate(u: np.ndarray, s: float, head: ConfidenceHead) -> float:
    """Calibrated confidence sigmoid(scale(u) * s + shift(u)) in (0, 1)."""
    scale, shift = scale_and_shift(u, head)
    return float(sigmoid(scale * s + shift))


def calibrate_scores(u: np.ndarray, scores: np.ndarray, head: ConfidenceHead) -> np.ndarray:
    """Calibrate many dot scores that share one source embedding."""
    scale, shift = scale_and_shift(u, head)
    return sigmoid(scale * np.asarray(scores) + shift)


def _logits(u_batch: np.ndarray, scores: np.ndarray, head: ConfidenceHead,
            dropout_mask: np.ndarray | None):
    feats = confidence_features(u_batch)
    if feats.shape[1] != head.scale_weights.shape[0]:
        raise DimensionMismatch(
            f"head expects feature length {head.scale_weights.shape[0]}, got {feats.shape[1]}"
        )
    if dropout_mask is not None:
        feats = feats * dropout_mask / (1.0 - head.dropout_rate)
    scale = feats @ head.scale_weights + head.scale_bias[0]
    shift = feats @ head.shift_weights + head.shift_bias[0]
    return feats, scale, shift, scale[:, None] * scores + shift[:, None]


def confidence_loss(
    u_batch: np.ndarray,
    scores: np.ndarray,
    head: ConfidenceHead,
    dropout_mask: np.ndarray | None = None,
) -> float:
    """Mean binary cross-entropy of calibrated in-batch scores.

    Row i of `scores` holds the pair scores of source i against every target
    in the batch; column i is the true pair (label 1), the rest are negatives
    (label 0).  `dropout_mask` is a 0/1 array over [u, u^2] features; when
    given, inverted dropout scaling is applied (training mode).
    """
    loss, _ = confidence_loss_and_grads(u_batch, scores, head, dropout_mask)
    return loss


def confidence_loss_and_grads(
    u_batch: np.ndarray,
    scores: np.ndarray,
    head: ConfidenceHead,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, HeadGrads]:
    """Confidence BCE and its gradients w.r.t. head parameters only.

    The towers receive no gradient from this loss by construction: the batch
    embeddings and scores are treated as constants.
    """
    k = scores.shape[0]
    if k < 2:
        raise DegenerateBatch(f"confidence batch needs >= 2 pairs, got {k}")
    if scores.shape != (k, k) or u_batch.shape[0] != k:
        raise DimensionMismatch(
            f"expected square scores [{k}, {k}] aligned with {k} sources, got {scores.shape}"
        )
    feats, _scale, _shift, z = _logits(u_batch, scores, head, dropout_mask)
    labels = np.eye(k, dtype=z.dtype)
    # Class-balanced weights: the one positive per row carries as much mass as
    # its k-1 negatives, else the 1:(k-1) imbalance drags every confidence
    # toward zero and the 0.5 mining threshold loses its meaning.
    weights = np.full_like(z, 1.0)
    weights[np.diag_indices(k)] = k - 1.0
    wsum = weights.sum()
    # Stable BCE-with-logits: max(z, 0) - z*y + log1p(exp(-|z|))
    bce = np.maximum(z, 0) - z * labels + np.log1p(np.exp(-np.abs(z)))
    loss = float((weights * bce).sum() / wsum)
    dz = weights * (sigmoid(z) - labels) / wsum
    dscale = (dz * scores).sum(axis=1)
    dshift = dz.sum(axis=1)
    grads = HeadGrads(
        scale_weights=feats.T @ dscale,
        scale_bias=np.array([dscale.sum()], dtype=feats.dtype),
        shift_weights=feats.T @ dshift,
        shift_bias=np.array([dshift.sum()], dtype=feats.dtype),
    )
    return loss, grads
