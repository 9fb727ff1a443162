"""Mask-to-s-rep variational encoder with a Chebyshev graph decoder."""
from .augment import augment, resample, transform_matrix, transform_points
from .config import ModelConfig
from .graph import cheb_conv, chebyshev_basis, scaled_laplacian
from .network import (EncoderOutput, SrepNet, denormalize_coords, kl_divergence, load_model, loss,
                      normalize_coords, substream)
from .training import (LOG_COLUMNS, NumericalError, Sample, Trainer, TrainResult, batch_arrays,
                       coordinate_mae, evaluate_loss, finetune, fit, load_samples, train)
