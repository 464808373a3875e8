"""Adaptive attacks on the purifier+classifier pipeline.

``pgd_attack`` is projected gradient ascent on per-sample cross-entropy,
with the gradient of the stochastic pipeline averaged over K independent
purification transcripts (expectation over transformations).  Two gradient
modes: ``full-adjoint`` differentiates the entire pipeline pathwise;
``bpda-identity`` runs the true purifier forward but substitutes the
identity for its backward map.

Candidate iterates are scored with a fixed evaluation stream (common random
numbers), so best-iterate tracking is monotone even though the defense is
stochastic, and the clean point itself is always candidate zero.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .adjoint import grad_defense
from .classifiers import ToyClassifier
from .errors import ContractError, DomainError
from .purifier import Purifier
from .streams import make_rng, stream_seed


@dataclass(frozen=True)
class AttackConfig:
    norm: Literal["linf", "l2"] = "linf"
    epsilon: float = 0.25
    step_size: float = 0.05
    n_iters: int = 20
    eot_k: int = 20
    gradient_mode: Literal["full-adjoint", "bpda-identity"] = "full-adjoint"
    seed: int = 0
    random_start: bool = True

    def __post_init__(self):
        if self.norm not in ("linf", "l2"):
            raise DomainError(f"unknown norm {self.norm!r}")
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        if self.step_size < 0:
            raise DomainError("step_size must be nonnegative")
        if self.n_iters < 0:
            raise DomainError("n_iters must be nonnegative")
        if self.eot_k < 1:
            raise DomainError("eot_k must be >= 1")
        if self.gradient_mode not in ("full-adjoint", "bpda-identity"):
            raise DomainError(f"unknown gradient mode {self.gradient_mode!r}")


@dataclass
class Pipeline:
    """A classifier with an optional purification defense in front."""

    classifier: ToyClassifier
    purifier: Optional[Purifier] = None

    @property
    def deterministic(self):
        if self.purifier is None:
            return True
        cfg = self.purifier.cfg
        return cfg.sampler != "ld" and cfg.t_star == 0.0 and cfg.jitter == 0.0

    def forward(self, x, seed, tag="fwd"):
        if self.purifier is None:
            return np.atleast_2d(np.asarray(x, dtype=float))
        x0, _ = self.purifier.run_batch(x, seed, tag=tag)
        return x0

    def predict(self, x, seed, tag="pred"):
        return self.classifier.predict(self.forward(x, seed, tag))

    def loss(self, x, labels, seed, tag="loss"):
        """Per-sample cross-entropy through one defense draw."""
        out = self.forward(x, seed, tag)
        loss, _ = self.classifier.loss_and_input_grad(out, labels)
        return loss


def eot_gradient(x, labels, pipeline: Pipeline, k, master_seed, tag="eot",
                 mode="full-adjoint"):
    """Mean of k full-pipeline gradients over independent transcripts.

    For a deterministic pipeline every draw coincides, so the single
    gradient is returned for any k.  Returns (grad (B, d), mean loss (B,)).
    """
    if k < 1:
        raise ContractError("eot count must be >= 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if pipeline.purifier is None:
        loss, grad = pipeline.classifier.loss_and_input_grad(x, labels)
        return grad, loss
    purifier = pipeline.purifier
    draws = 1 if pipeline.deterministic else k
    g_sum = np.zeros_like(x)
    l_sum = np.zeros(x.shape[0])
    for i in range(draws):
        loss, grad, _ = grad_defense(
            x, labels, purifier.score, pipeline.classifier, purifier.cfg,
            purifier.schedule, master_seed, tag=f"{tag}/{i}", mode=mode,
        )
        g_sum += grad
        l_sum += loss
    return g_sum / draws, l_sum / draws


def _project(x, x0, norm, eps):
    delta = x - x0
    if norm == "linf":
        return x0 + np.clip(delta, -eps, eps)
    norms = np.linalg.norm(delta, axis=1, keepdims=True)
    scale = np.where(norms > eps, eps / np.maximum(norms, 1e-300), 1.0)
    return x0 + delta * scale


def _random_start(x0, norm, eps, rng):
    if norm == "linf":
        return x0 + rng.uniform(-eps, eps, size=x0.shape)
    d = x0.shape[1]
    direction = rng.standard_normal(x0.shape)
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    radius = eps * rng.uniform(0.0, 1.0, size=(x0.shape[0], 1)) ** (1.0 / d)
    return x0 + radius * direction


def pgd_attack(x, labels, pipeline: Pipeline, cfg: AttackConfig):
    """Projected gradient ascent; returns (x_adv, best per-sample loss).

    Every iterate is projected back into the epsilon ball around the clean
    input, and the returned point is the per-sample best-loss iterate under
    a fixed evaluation stream (the clean point is the initial candidate, so
    the returned loss never falls below the clean loss).
    """
    x0 = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    labels = np.asarray(labels, dtype=int)
    eval_seed = stream_seed(cfg.seed, "pgd-eval")
    best_x = x0.copy()
    best_loss = pipeline.loss(x0, labels, eval_seed, tag="ceval")
    if cfg.epsilon == 0.0:
        return best_x, best_loss

    x_adv = x0.copy()
    if cfg.random_start:
        x_adv = _project(
            _random_start(x0, cfg.norm, cfg.epsilon, make_rng(cfg.seed, "pgd-init")),
            x0, cfg.norm, cfg.epsilon,
        )

    def consider(cand):
        nonlocal best_x, best_loss
        loss = pipeline.loss(cand, labels, eval_seed, tag="ceval")
        better = loss > best_loss
        best_loss = np.where(better, loss, best_loss)
        best_x = np.where(better[:, None], cand, best_x)

    consider(x_adv)
    for it in range(cfg.n_iters):
        grad, _ = eot_gradient(
            x_adv, labels, pipeline, cfg.eot_k,
            master_seed=stream_seed(cfg.seed, "pgd-iter", it),
            mode=cfg.gradient_mode,
        )
        if cfg.norm == "linf":
            step = np.sign(grad)
        else:
            norms = np.linalg.norm(grad, axis=1, keepdims=True)
            # zero gradient -> no movement, deterministically
            step = np.where(norms > 0.0, grad / np.maximum(norms, 1e-300), 0.0)
        x_adv = _project(x_adv + cfg.step_size * step, x0, cfg.norm, cfg.epsilon)
        consider(x_adv)
    return best_x, best_loss
