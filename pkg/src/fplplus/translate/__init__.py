from fplplus.translate.cdda import AugmentedCase, cdda_augment, read_augmented, write_augmented
from fplplus.translate.cyclegan import (
    CycleGANConfig,
    TranslatorSet,
    auxiliary_epoch,
    train_cyclegan,
    translate_volume,
    volume_slices,
)
from fplplus.translate.losses import (
    adversarial_loss,
    cycle_loss,
    discriminator_loss,
    gan_objective,
    generator_loss,
)
from fplplus.translate.networks import DiscriminatorConfig, DiscriminatorNet, TranslatorConfig, TranslatorNet

__all__ = [
    "AugmentedCase",
    "CycleGANConfig",
    "DiscriminatorConfig",
    "DiscriminatorNet",
    "TranslatorConfig",
    "TranslatorNet",
    "TranslatorSet",
    "adversarial_loss",
    "auxiliary_epoch",
    "cdda_augment",
    "cycle_loss",
    "discriminator_loss",
    "gan_objective",
    "generator_loss",
    "read_augmented",
    "train_cyclegan",
    "translate_volume",
    "volume_slices",
    "write_augmented",
]
