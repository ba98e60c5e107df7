"""Semi-supervised multi-view learning with missing views."""

__version__ = "0.1.0"

from .gaussian import DiagGaussian, kl_to_standard, poe_fuse, reparam_sample, standard_prior
from .dataset import Batch, Dataset, DatasetSchema, MultiViewSample
from .model import ModelConfig, MultiViewModel
from .losses import LossBreakdown, cvmi_loss, infonce_pair, total_loss
from .trainer import TrainConfig, train
