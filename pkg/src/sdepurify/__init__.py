"""Diffusion-based purification with exact pathwise gradients, desk scale."""

from .adjoint import GradientReport, backprop_ld, backprop_sde, finite_diff_grad, grad_defense
from .attacks import AttackConfig, Pipeline, eot_gradient, pgd_attack
from .classifiers import (
    ToyClassifier,
    ToyDataset,
    evaluate_accuracy,
    load_classifier,
    make_dataset,
    save_classifier,
    train_classifier,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateDistributionError,
    DivergenceError,
    DomainError,
    TrainingDivergenceError,
)
from .purifier import (
    Purifier,
    PurifierConfig,
    Transcript,
    diffuse,
    purify,
    purify_ld_sde,
    purify_vp_ode,
)
from .schedule import NoiseSchedule
from .scores import GaussianScore, MlpScore, ScoreModel, dsm_target, dsm_train, load_score, save_score
from .sde import SdeProblem, WienerRecord, integrate, replay_reversed, sdeint
from .streams import make_rng, stream_seed
from .theory import (
    GaussianPair,
    analytic_gradient,
    bound_check_thm2,
    c_delta,
    de_bruijn_residual,
    fisher_along_diffusion,
    gradcheck_study,
    kl_along_diffusion,
    score_sup_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
