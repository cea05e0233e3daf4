"""TD, state-prediction and contrastive losses, with analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.1  # auxiliary loss weight
    tau: float = 0.07  # InfoNCE temperature
    m_negatives: int = 20
    gamma: float = 0.99

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.m_negatives < 1:
            raise ValueError("m_negatives must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def td_target(reward, gamma, q_next_max):
    return reward + gamma * q_next_max


def td_loss(y_tot, q_tot) -> float:
    y, q = np.asarray(y_tot, dtype=float), np.asarray(q_tot, dtype=float)
    if y.size == 0:
        raise ValueError("empty batch")
    if y.shape != q.shape:
        raise ValueError("targets and estimates differ in shape")
    return float(np.mean((y - q) ** 2))


def _batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def aux_pred_loss(states, predictions) -> float:
    """Squared error summed over state dimensions, averaged over the batch."""
    s, p = _batch(states), _batch(predictions)
    if s.shape != p.shape:
        raise ValueError(f"state shape {s.shape} != prediction shape {p.shape}")
    return float(np.mean(np.sum((s - p) ** 2, axis=1)))


def aux_pred_loss_grad(states, predictions) -> np.ndarray:
    """Gradient with respect to ``predictions``."""
    s, p = _batch(states), _batch(predictions)
    if s.shape != p.shape:
        raise ValueError(f"state shape {s.shape} != prediction shape {p.shape}")
    grad = 2.0 * (p - s) / s.shape[0]
    return grad.reshape(np.shape(predictions))


def total_loss(td, aux, alpha) -> float:
    return td + alpha * aux


# -- contrastive --------------------------------------------------------------


@dataclass
class ContrastiveBatch:
    anchor: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray  # (M, d)
    anchor_index: tuple[int, int] | None = None  # (agent, t)
    positive_index: tuple[int, int] | None = None
    negative_index: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.positive = np.asarray(self.positive, dtype=float)
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=float))
        d = self.anchor.shape[0]
        if self.positive.shape != (d,) or self.negatives.shape[1] != d:
            raise ValueError("anchor, positive and negatives must share one dimension")
        for name, arr in (("anchor", self.anchor), ("positive", self.positive), ("negatives", self.negatives)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")


def sample_contrastive_pairs(
    message_log,
    diameter: int,
    cfg: LossConfig,
    seed,
    anchor_t: int | None = None,
) -> ContrastiveBatch:
    """Draw one anchor/positive pair and ``cfg.m_negatives`` negatives.

    ``message_log[t, i]`` is agent ``i``'s message at step ``t``. Positives
    come from another agent at the same step; negatives are drawn uniformly,
    with replacement, from every ``(agent, t')`` with ``|t' - t| > diameter``.
    The anchor step is uniform over steps that have such a pool unless pinned
    with ``anchor_t``.
    """
    log = np.asarray(message_log, dtype=float)
    if log.ndim != 3:
        raise ValueError("message_log must have shape (T, n, d)")
    T, n, _ = log.shape
    if n < 2:
        raise ValueError("need at least two agents for a positive pair")
    steps = np.arange(T)
    valid = [t for t in range(T) if np.any(np.abs(steps - t) > diameter)]
    if anchor_t is not None:
        if not 0 <= anchor_t < T:
            raise IndexError(f"anchor_t={anchor_t} outside log of length {T}")
        if anchor_t not in valid:
            raise ValueError(f"no negatives farther than {diameter} steps from t={anchor_t} in a log of length {T}")
    elif not valid:
        raise ValueError(f"log of length {T} too short to exclude a window of {diameter} steps")
    rng = np.random.default_rng(seed)
    t = anchor_t if anchor_t is not None else int(rng.choice(valid))
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    j += j >= i
    far = steps[np.abs(steps - t) > diameter]
    pool = [(int(k), int(tp)) for tp in far for k in range(n)]
    picks = rng.integers(len(pool), size=cfg.m_negatives)
    neg_index = [pool[p] for p in picks]
    return ContrastiveBatch(
        anchor=log[t, i],
        positive=log[t, j],
        negatives=np.array([log[tp, k] for k, tp in neg_index]),
        anchor_index=(i, t),
        positive_index=(j, t),
        negative_index=neg_index,
    )


def _unit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return x / norms, norms


def _infonce_parts(batch: ContrastiveBatch, tau: float):
    if tau <= 0:
        raise ValueError("tau must be > 0")
    ua, na = _unit(batch.anchor)
    # candidate set: positive first, then the negatives
    cands = np.vstack([batch.positive, batch.negatives])
    uc, nc = _unit(cands)
    logits = uc @ ua / tau
    return ua, na, uc, nc, cands, logits


def infonce_loss(batch: ContrastiveBatch, tau: float) -> float:
    """``-log softmax`` of the positive among ``{positive} + negatives`` on unit vectors."""
    *_, logits = _infonce_parts(batch, tau)
    return float(logsumexp(logits) - logits[0])


def infonce_loss_grad(batch: ContrastiveBatch, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients with respect to (anchor, positive, negatives), raw (unnormalized) inputs."""
    ua, na, uc, nc, _, logits = _infonce_parts(batch, tau)
    coef = softmax(logits)
    coef[0] -= 1.0
    g_ua = coef @ uc / tau
    g_uc = np.outer(coef, ua) / tau
    # back through x / |x|: (I - u u^T) g / |x|
    g_a = (g_ua - ua * (ua @ g_ua)) / na
    g_c = (g_uc - uc * np.sum(uc * g_uc, axis=1, keepdims=True)) / nc
    return g_a, g_c[0], g_c[1:]


# -- numerical verification ----------------------------------------------------


def central_difference(fn: Callable[[np.ndarray], np.ndarray], point, epsilon: float = 1e-6) -> np.ndarray:
    """Numerical Jacobian of ``fn`` at ``point``; shape ``fn(point).shape + point.shape``."""
    x = np.asarray(point, dtype=float)
    base = np.asarray(fn(x), dtype=float)
    jac = np.empty(base.shape + x.shape)
    for idx in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[idx] = epsilon
        hi, lo = np.asarray(fn(x + step)), np.asarray(fn(x - step))
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise FloatingPointError(f"non-finite evaluation near index {idx}")
        jac[(...,) + idx] = (hi - lo) / (2 * epsilon)
    return jac


def relative_error(analytic, numeric) -> float:
    """Max absolute difference scaled by the larger of the two max magnitudes."""
    a, b = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    diff = np.abs(a - b).max(initial=0.0)
    return 0.0 if diff == 0 else float(diff / scale)


def finite_diff_check(fn, grad_fn, point, epsilon: float = 1e-5) -> float:
    """Max relative error between ``grad_fn(point)`` and central differences of ``fn``.

    ``fn`` may be scalar- or vector-valued; ``grad_fn`` returns the gradient
    (or Jacobian with output axes first) at ``point``.
    """
    if not 1e-8 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-8, 1e-3]")
    x = np.asarray(point, dtype=float)
    value = np.asarray(fn(x), dtype=float)
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("non-finite evaluation at the check point")
    return relative_error(grad_fn(x), central_difference(fn, x, epsilon))


# Flattened views so every kernel can go through ``finite_diff_check``.


def infonce_flat(batch_shape: tuple[int, int], tau: float):
    """``(loss_fn, grad_fn)`` over a flat vector ``[anchor, positive, negatives...]``."""
    m, d = batch_shape

    def unpack(x):
        x = x.reshape(m + 2, d)
        return ContrastiveBatch(x[0], x[1], x[2:])

    def loss(x):
        return infonce_loss(unpack(x), tau)

    def grad(x):
        ga, gp, gn = infonce_loss_grad(unpack(x), tau)
        return np.concatenate([ga, gp, gn.ravel()])

    return loss, grad
