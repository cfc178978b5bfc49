"""Conditional-GAN experimentation engine with twin-auxiliary-classifier support."""

__version__ = "0.1.0"

from .autodiff import Tape, grad_check
from .gan_losses import GanVariant, LossBundle, PlayerHeads, assemble
from .harness import RunConfig, RunRecord, load_record, run_training, save_record, sweep
from .networks import Adam, MlpSpec, MultiHeadNet, init_mlp, init_multihead
from .synthdata import MixtureSpec, make_mog_spec, mog_pdf, mog_posterior, sample_mog
from .theory import DiscreteJoint

__all__ = [
    "Adam",
    "DiscreteJoint",
    "GanVariant",
    "LossBundle",
    "MixtureSpec",
    "MlpSpec",
    "MultiHeadNet",
    "PlayerHeads",
    "RunConfig",
    "RunRecord",
    "Tape",
    "assemble",
    "grad_check",
    "init_mlp",
    "init_multihead",
    "load_record",
    "make_mog_spec",
    "mog_pdf",
    "mog_posterior",
    "run_training",
    "sample_mog",
    "save_record",
    "sweep",
]
