"""Multimodal triplet alignment objective and head training.

The objective combines four hinge terms over a triplet's image and text
embeddings: cross-modal image-to-text and text-to-image terms, weighted
by eta, plus within-modal image-to-image and text-to-text terms,
weighted by 1 - eta. Only the two square projection heads train; the
encoder trunks stay frozen, so gradients flow through a single linear
map and the cosine similarities. Gradients are analytic, with a central
finite-difference oracle alongside for verification.

``sign_mode`` selects the hinge orientation. The default ``corrected``
form max(0, cos(A,N) - cos(A,P) + alpha) decreases when the anchor moves
toward the positive; the ``as-printed`` form swaps the two cosines and
is kept for fidelity experiments. The two modes satisfy
corrected(A, P, N) == as-printed(A, N, P) for all inputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import IMAGE, TEXT, Embedding

logger = logging.getLogger(__name__)

TERM_NAMES = ("i2t", "t2i", "i2i", "t2t")


class DegenerateEmbeddingError(ValueError):
    """Zero-norm vector where a cosine similarity is required."""


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.3
    eta: float = 0.5
    sign_mode: str = "corrected"  # or "as-printed"

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("margin alpha must be nonnegative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.sign_mode not in ("corrected", "as-printed"):
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")


@dataclass(frozen=True)
class TripletEmbeddings:
    """Image and text embeddings for anchor, positive and negative."""

    ei_a: np.ndarray
    ei_p: np.ndarray
    ei_n: np.ndarray
    et_a: np.ndarray
    et_p: np.ndarray
    et_n: np.ndarray

    @classmethod
    def from_embeddings(cls, image: Sequence[Embedding], text: Sequence[Embedding]) -> "TripletEmbeddings":
        return cls(*(e.vector for e in image), *(e.vector for e in text))


@dataclass(frozen=True)
class TripletTrunks:
    """Frozen trunk outputs for one mined triplet (pre-head vectors)."""

    zi_a: np.ndarray
    zi_p: np.ndarray
    zi_n: np.ndarray
    zt_a: np.ndarray
    zt_p: np.ndarray
    zt_n: np.ndarray


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateEmbeddingError("cosine of a zero-norm vector is undefined")
    return float(u @ v / (nu * nv))


def _cosine_with_grads(u: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateEmbeddingError("cosine of a zero-norm vector is undefined")
    c = float(u @ v / (nu * nv))
    du = v / (nu * nv) - c * u / nu**2
    dv = u / (nu * nv) - c * v / nv**2
    return c, du, dv


def triplet_hinge(
    ea: np.ndarray, ep: np.ndarray, en: np.ndarray, alpha: float, sign_mode: str = "corrected"
) -> float:
    """Hinge over the anchor's two cosine similarities; always >= 0."""
    cos_ap = cosine(ea, ep)
    cos_an = cosine(ea, en)
    if sign_mode == "corrected":
        return max(0.0, cos_an - cos_ap + alpha)
    return max(0.0, cos_ap - cos_an + alpha)


def _hinge_with_grads(
    ea: np.ndarray, ep: np.ndarray, en: np.ndarray, alpha: float, sign_mode: str
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    cos_ap, dap_a, dap_p = _cosine_with_grads(ea, ep)
    cos_an, dan_a, dan_n = _cosine_with_grads(ea, en)
    sign = 1.0 if sign_mode == "corrected" else -1.0
    z = sign * (cos_an - cos_ap) + alpha
    if z <= 0.0:  # subgradient 0 at the kink and in the flat region
        zero = np.zeros_like(ea)
        return max(0.0, z), zero, np.zeros_like(ep), np.zeros_like(en)
    return z, sign * (dan_a - dap_a), -sign * dap_p, sign * dan_n


def multimodal_loss(t: TripletEmbeddings, cfg: LossConfig = LossConfig()) -> tuple[float, dict[str, float]]:
    """Total objective and its four constituent terms for one triplet."""
    terms = {
        "i2t": triplet_hinge(t.ei_a, t.et_p, t.et_n, cfg.alpha, cfg.sign_mode),
        "t2i": triplet_hinge(t.et_a, t.ei_p, t.ei_n, cfg.alpha, cfg.sign_mode),
        "i2i": triplet_hinge(t.ei_a, t.ei_p, t.ei_n, cfg.alpha, cfg.sign_mode),
        "t2t": triplet_hinge(t.et_a, t.et_p, t.et_n, cfg.alpha, cfg.sign_mode),
    }
    total = cfg.eta * (terms["i2t"] + terms["t2i"]) + (1.0 - cfg.eta) * (terms["i2i"] + terms["t2t"])
    return total, terms


def _project(trunks: TripletTrunks, heads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    wi, wt = heads[IMAGE], heads[TEXT]
    return {
        "i_a": wi @ trunks.zi_a,
        "i_p": wi @ trunks.zi_p,
        "i_n": wi @ trunks.zi_n,
        "t_a": wt @ trunks.zt_a,
        "t_p": wt @ trunks.zt_p,
        "t_n": wt @ trunks.zt_n,
    }


# Term layout: (name, anchor role, positive role, negative role).
_TERM_ROLES = (
    ("i2t", "i_a", "t_p", "t_n"),
    ("t2i", "t_a", "i_p", "i_n"),
    ("i2i", "i_a", "i_p", "i_n"),
    ("t2t", "t_a", "t_p", "t_n"),
)

_ROLE_TRUNK = {
    "i_a": ("zi_a", IMAGE),
    "i_p": ("zi_p", IMAGE),
    "i_n": ("zi_n", IMAGE),
    "t_a": ("zt_a", TEXT),
    "t_p": ("zt_p", TEXT),
    "t_n": ("zt_n", TEXT),
}


def head_gradients(
    batch: Sequence[TripletTrunks],
    heads: dict[str, np.ndarray],
    cfg: LossConfig = LossConfig(),
) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
    """Mean loss, mean per-term values, and analytic head gradients.

    Gradients are of the batch-mean total with respect to each head.
    """
    if not batch:
        raise ValueError("empty triplet batch")
    grads = {IMAGE: np.zeros_like(heads[IMAGE]), TEXT: np.zeros_like(heads[TEXT])}
    term_sums = dict.fromkeys(TERM_NAMES, 0.0)
    total_sum = 0.0
    for trunks in batch:
        e = _project(trunks, heads)
        e_grads = {role: np.zeros_like(vec) for role, vec in e.items()}
        for name, ra, rp, rn in _TERM_ROLES:
            weight = cfg.eta if name in ("i2t", "t2i") else 1.0 - cfg.eta
            value, ga, gp, gn = _hinge_with_grads(e[ra], e[rp], e[rn], cfg.alpha, cfg.sign_mode)
            term_sums[name] += value
            total_sum += weight * value
            e_grads[ra] += weight * ga
            e_grads[rp] += weight * gp
            e_grads[rn] += weight * gn
        for role, g in e_grads.items():
            z_name, modality = _ROLE_TRUNK[role]
            grads[modality] += np.outer(g, getattr(trunks, z_name))
    n = len(batch)
    for modality in grads:
        grads[modality] /= n
    return total_sum / n, {k: v / n for k, v in term_sums.items()}, grads


def mean_loss(batch: Sequence[TripletTrunks], heads: dict[str, np.ndarray], cfg: LossConfig) -> float:
    total = 0.0
    for trunks in batch:
        e = _project(trunks, heads)
        value, _ = multimodal_loss(
            TripletEmbeddings(e["i_a"], e["i_p"], e["i_n"], e["t_a"], e["t_p"], e["t_n"]), cfg
        )
        total += value
    return total / len(batch)


def finite_difference_gradients(
    batch: Sequence[TripletTrunks],
    heads: dict[str, np.ndarray],
    cfg: LossConfig = LossConfig(),
    step: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Central finite differences of the batch-mean loss, element by element."""
    fd = {}
    for modality, w in heads.items():
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            perturbed = {m: (w_.copy() if m == modality else w_) for m, w_ in heads.items()}
            perturbed[modality][idx] = w[idx] + step
            up = mean_loss(batch, perturbed, cfg)
            perturbed[modality][idx] = w[idx] - step
            down = mean_loss(batch, perturbed, cfg)
            g[idx] = (up - down) / (2.0 * step)
        fd[modality] = g
    return fd


@dataclass(frozen=True)
class GradReport:
    """Analytic vs finite-difference head gradients.

    ``max_rel_error`` is the max over heads of the max-norm of the
    difference divided by the max-norm of the larger gradient.
    """

    analytic: dict[str, np.ndarray]
    finite_difference: dict[str, np.ndarray]
    max_rel_error: float


def gradient_report(
    batch: Sequence[TripletTrunks],
    heads: dict[str, np.ndarray],
    cfg: LossConfig = LossConfig(),
    step: float = 1e-4,
) -> GradReport:
    _, _, analytic = head_gradients(batch, heads, cfg)
    fd = finite_difference_gradients(batch, heads, cfg, step)
    worst = 0.0
    for modality in heads:
        scale = max(
            float(np.abs(analytic[modality]).max()),
            float(np.abs(fd[modality]).max()),
            1e-12,
        )
        worst = max(worst, float(np.abs(analytic[modality] - fd[modality]).max()) / scale)
    return GradReport(analytic=analytic, finite_difference=fd, max_rel_error=worst)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0


class Adam:
    """Standard Adam with bias correction, updating arrays in place."""

    def __init__(self, params: dict[str, np.ndarray], cfg: OptimizerConfig) -> None:
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        for key, g in grads.items():
            self.m[key] = c.beta1 * self.m[key] + (1.0 - c.beta1) * g
            self.v[key] = c.beta2 * self.v[key] + (1.0 - c.beta2) * g**2
            m_hat = self.m[key] / (1.0 - c.beta1**self.t)
            v_hat = self.v[key] / (1.0 - c.beta2**self.t)
            self.params[key] -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {f"adam.m.{k}": v for k, v in self.m.items()}
        state.update({f"adam.v.{k}": v for k, v in self.v.items()})
        state["adam.t"] = np.array([self.t], dtype=np.int64)
        return state

    def restore(self, state: dict[str, np.ndarray]) -> None:
        for key in self.params:
            self.m[key] = state[f"adam.m.{key}"].copy()
            self.v[key] = state[f"adam.v.{key}"].copy()
        self.t = int(state["adam.t"][0])


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    total: float
    terms: dict[str, float]


@dataclass
class TrainResult:
    heads: dict[str, np.ndarray]
    curve: list[EpochStats]
    optimizer_state: dict[str, np.ndarray]


def train_heads(
    triplet_trunks: Sequence[TripletTrunks],
    heads: dict[str, np.ndarray],
    loss_cfg: LossConfig = LossConfig(),
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    resume_state: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Mini-batch Adam over pre-computed trunk outputs.

    The input heads are not mutated; training runs on copies. Loss per
    epoch is the mean over batches of the pre-update batch loss. Each
    epoch's shuffle is seeded by (seed, epoch number), so passing a
    previous run's ``optimizer_state`` as ``resume_state`` (with that
    run's trained heads) continues it exactly where it stopped.
    """
    if not triplet_trunks:
        raise ValueError("no triplets to train on")
    trained = {k: v.copy() for k, v in heads.items()}
    optimizer = Adam(trained, opt_cfg)
    start_epoch = 0
    if resume_state is not None:
        optimizer.restore(resume_state)
        start_epoch = int(resume_state["adam.epoch"][0])
    curve: list[EpochStats] = []
    n = len(triplet_trunks)
    for epoch in range(start_epoch + 1, start_epoch + opt_cfg.epochs + 1):
        order = np.random.default_rng((opt_cfg.seed, epoch)).permutation(n)
        total_sum = 0.0
        term_sums = dict.fromkeys(TERM_NAMES, 0.0)
        for start in range(0, n, opt_cfg.batch_size):
            batch = [triplet_trunks[int(i)] for i in order[start : start + opt_cfg.batch_size]]
            batch_total, batch_terms, grads = head_gradients(batch, trained, loss_cfg)
            if not np.isfinite(batch_total):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: {batch_total!r}"
                )
            optimizer.step(grads)
            total_sum += batch_total * len(batch)
            for k, v in batch_terms.items():
                term_sums[k] += v * len(batch)
        curve.append(
            EpochStats(epoch, total_sum / n, {k: v / n for k, v in term_sums.items()})
        )
        logger.debug("epoch %d mean loss %.6f", epoch, curve[-1].total)
    state = optimizer.state_arrays()
    state["adam.epoch"] = np.array([start_epoch + opt_cfg.epochs], dtype=np.int64)
    return TrainResult(heads=trained, curve=curve, optimizer_state=state)


def write_loss_curve(path: str | Path, curve: Sequence[EpochStats]) -> None:
    lines = []
    for stats in curve:
        record = {"epoch": stats.epoch, "total": stats.total}
        record.update({k: stats.terms[k] for k in TERM_NAMES})
        lines.append(json.dumps(record))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
