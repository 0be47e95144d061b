"""Vector-quantized observation defenses for RL agents.

Thin Python surface over the C++ core: per-dimension codebooks,
environments, SAC agents, observation attacks, and robustness metrics.
"""

from ._vqrl import (  # noqa: F401
    AgentConfig,
    AttackConfig,
    Env,
    EnvMetadata,
    PerDimCodebooks,
    SacAgent,
    VqConfig,
    adaptive_scale,
    attack_observation,
    attack_space_size,
    bdr_quantize,
    default_eps_grid,
    evaluate_curve,
    init_codebooks,
    load_codebooks,
    make_env,
    pgd,
    quantize,
    robustness_score,
    save_codebooks,
    spearman,
    train,
    update_codebooks,
    vq_loss,
)

__all__ = [
    "AgentConfig",
    "AttackConfig",
    "Env",
    "EnvMetadata",
    "PerDimCodebooks",
    "SacAgent",
    "VqConfig",
    "adaptive_scale",
    "attack_observation",
    "attack_space_size",
    "bdr_quantize",
    "default_eps_grid",
    "evaluate_curve",
    "init_codebooks",
    "load_codebooks",
    "make_env",
    "pgd",
    "quantize",
    "robustness_score",
    "save_codebooks",
    "spearman",
    "train",
    "update_codebooks",
    "vq_loss",
]
