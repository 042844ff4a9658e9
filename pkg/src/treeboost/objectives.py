"""Loss objectives for boosting: gradients and hessians w.r.t. the margin.

All objectives are built on the binary cross-entropy of p = sigmoid(margin):

  plain logistic   L = -[y log p + (1-y) log(1-p)]
  positive scaling w multiplies the gradient and hessian of positive rows
  weighted alpha   L = -[a y log p + (1-y) log(1-p)]
  focal gamma      L = -[y (1-p)^g log p + (1-y) p^g log(1-p)]

The identity parameters (w=1, alpha=1, gamma=0) take the plain logistic
code path so the reductions are bit-exact.  Focal hessians can be
negative far from the decision boundary; training clamps them at a
small positive floor, while the raw values are exposed for derivative
checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

HESSIAN_FLOOR = 1e-16


class ObjectiveError(ValueError):
    """Raised for invalid loss parameter combinations."""


@dataclass(frozen=True)
class Objective:
    """Loss configuration: positive-class scale plus one optional extension."""

    scale_pos_weight: float = 1.0
    weighted_alpha: Optional[float] = None
    focal_gamma: Optional[float] = None

    def __post_init__(self):
        if self.scale_pos_weight < 1.0:
            raise ObjectiveError("scale_pos_weight must be >= 1")
        if self.weighted_alpha is not None and self.weighted_alpha < 1.0:
            raise ObjectiveError("weighted_alpha must be >= 1 when set")
        if self.focal_gamma is not None and self.focal_gamma < 0.0:
            raise ObjectiveError("focal_gamma must be >= 0 when set")
        if self.weighted_alpha is not None and self.focal_gamma is not None:
            raise ObjectiveError(
                "weighted_alpha and focal_gamma cannot be combined in one fit"
            )

    def tag(self) -> dict:
        return {
            "family": "logistic",
            "scale_pos_weight": self.scale_pos_weight,
            "weighted_alpha": self.weighted_alpha,
            "focal_gamma": self.focal_gamma,
        }

    @classmethod
    def from_tag(cls, obj: dict) -> "Objective":
        return cls(
            float(obj["scale_pos_weight"]),
            None if obj["weighted_alpha"] is None else float(obj["weighted_alpha"]),
            None if obj["focal_gamma"] is None else float(obj["focal_gamma"]),
        )


def sigmoid(margins: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    m = np.asarray(margins, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _log_p(margins: np.ndarray) -> np.ndarray:
    """log(sigmoid(m)), stable for very negative margins."""
    return -np.logaddexp(0.0, -margins)


def _log_1mp(margins: np.ndarray) -> np.ndarray:
    """log(1 - sigmoid(m)), stable for very positive margins."""
    return -np.logaddexp(0.0, margins)


def loss_values(objective: Objective, labels: np.ndarray, margins: np.ndarray) -> np.ndarray:
    """Per-sample loss, used by finite-difference checks and the fit log."""
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    log_p = _log_p(m)
    log_q = _log_1mp(m)
    if objective.focal_gamma is not None and objective.focal_gamma != 0.0:
        g = objective.focal_gamma
        p = sigmoid(m)
        base = -(y * (1.0 - p) ** g * log_p + (1.0 - y) * p**g * log_q)
    elif objective.weighted_alpha is not None:
        a = objective.weighted_alpha
        base = -(a * y * log_p + (1.0 - y) * log_q)
    else:
        base = -(y * log_p + (1.0 - y) * log_q)
    if objective.scale_pos_weight != 1.0:
        base = np.where(y == 1.0, objective.scale_pos_weight * base, base)
    return base


def grad_hess(
    objective: Objective,
    labels: np.ndarray,
    margins: np.ndarray,
    clip_hessian: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic first and second derivatives of the loss w.r.t. the margin.

    With clip_hessian (the training path) hessians are floored at a small
    positive value; pass False to get the raw derivatives.
    """
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    if len(y) != len(m):
        raise ObjectiveError("labels and margins differ in length")
    p = sigmoid(m)

    if objective.focal_gamma is not None and objective.focal_gamma != 0.0:
        g, h = _focal_grad_hess(objective.focal_gamma, y, m, p)
    elif objective.weighted_alpha is not None and objective.weighted_alpha != 1.0:
        a = objective.weighted_alpha
        # positive term scaled by alpha: g = -a*y*(1-p) + (1-y)*p
        g = np.where(y == 1.0, a * (p - 1.0), p)
        h = np.where(y == 1.0, a * p * (1.0 - p), p * (1.0 - p))
    else:
        g = p - y
        h = p * (1.0 - p)

    w = objective.scale_pos_weight
    if w != 1.0:
        g = np.where(y == 1.0, w * g, g)
        h = np.where(y == 1.0, w * h, h)
    if clip_hessian:
        h = np.maximum(h, HESSIAN_FLOOR)
    return g, h


def _focal_grad_hess(
    gamma: float, y: np.ndarray, m: np.ndarray, p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the focal cross-entropy, derived by the chain rule.

    For y=1 (the y=0 case is the mirror image under p -> 1-p):
      L  = -(1-p)^g log p
      g1 = g p (1-p)^g log p - (1-p)^(g+1)
      h1 = g p (1-p)^g log p [(1-p) - g p] + (2g+1) p (1-p)^(g+1)
    """
    log_p = _log_p(m)
    log_q = _log_1mp(m)
    q = 1.0 - p

    qg = q**gamma
    pg = p**gamma

    g_pos = gamma * p * qg * log_p - qg * q
    h_pos = gamma * p * qg * log_p * (q - gamma * p) + (2.0 * gamma + 1.0) * p * qg * q

    g_neg = pg * p - gamma * q * pg * log_q
    h_neg = gamma * q * pg * log_q * (p - gamma * q) + (2.0 * gamma + 1.0) * q * pg * p

    g = np.where(y == 1.0, g_pos, g_neg)
    h = np.where(y == 1.0, h_pos, h_neg)
    return g, h
