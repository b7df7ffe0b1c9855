"""Learned fingerprint synthesis.

Adversarial training with a gradient-penalty critic, warm-started from a
convolutional autoencoder's decoder, plus an identity term that pushes
the embeddings of a generated batch apart.  Generation runs in seeded
shards that encode every image as it is produced.
"""

from .latent import sample_latent
from .networks import (
    ArchitectureMismatch,
    GanArchitecture,
    LadderSpec,
    MlpSpec,
    conv_architecture,
    describe_ladder,
    discriminator_forward,
    embedding_forward,
    encoder_forward,
    generator_forward,
    init_weights,
    mlp_architecture,
    parameter_nodes,
    parameter_shapes,
    trainable_names,
)
from .losses import (
    DegenerateBatch,
    critic_loss,
    generator_adversarial_loss,
    gradient_penalty,
    gradient_penalty_node,
    identity_loss,
    pairwise_distance_sum,
)
from .training import (
    EmptyCorpus,
    InsufficientLabels,
    NonFiniteLoss,
    TrainSchedule,
    cae_schedule,
    embed_images,
    embedding_node,
    finetune_plain,
    finetune_schedule,
    gan_schedule,
    init_generator_from_decoder,
    mixture_schedule,
    reconstruction_loss,
    sample_ring_mixture,
    train_cae,
    train_identity_encoder,
    train_iwgan,
)
from .sharding import (
    SynthesisJobSpec,
    generate_all_shards,
    generate_shard,
    regenerate_leading_images,
)
from .ablation import (
    AblationResult,
    batch_spread,
    generate_mixture_batch,
    identity_ablation,
    train_mixture_generator,
)

__all__ = [
    "AblationResult",
    "ArchitectureMismatch",
    "DegenerateBatch",
    "EmptyCorpus",
    "GanArchitecture",
    "InsufficientLabels",
    "LadderSpec",
    "MlpSpec",
    "NonFiniteLoss",
    "SynthesisJobSpec",
    "TrainSchedule",
    "batch_spread",
    "cae_schedule",
    "conv_architecture",
    "critic_loss",
    "describe_ladder",
    "discriminator_forward",
    "embed_images",
    "embedding_forward",
    "embedding_node",
    "encoder_forward",
    "finetune_plain",
    "finetune_schedule",
    "gan_schedule",
    "generate_all_shards",
    "generate_mixture_batch",
    "generate_shard",
    "generator_adversarial_loss",
    "generator_forward",
    "gradient_penalty",
    "gradient_penalty_node",
    "identity_ablation",
    "identity_loss",
    "init_generator_from_decoder",
    "init_weights",
    "mixture_schedule",
    "mlp_architecture",
    "pairwise_distance_sum",
    "parameter_nodes",
    "parameter_shapes",
    "reconstruction_loss",
    "regenerate_leading_images",
    "sample_latent",
    "sample_ring_mixture",
    "trainable_names",
    "train_cae",
    "train_mixture_generator",
    "train_identity_encoder",
    "train_iwgan",
]
