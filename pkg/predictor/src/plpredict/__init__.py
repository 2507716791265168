"""plpredict: a toy 3D residual regressor for voxel path-loss datasets.

Consumes the producer's HDF5 sample contract and split manifests, predicts
the environment loss relative to the free-space baseline with a small
encoder-decoder, and reconstructs total path-loss heatmaps.
"""

__version__ = "0.1.0"

from .data import DataError, Manifest, Sample, list_sample_ids, load_samples
from .losses import masked_rmse
from .model import ResidualRegressor
from .normalize import ChannelStats, compute_stats, denormalize, normalize
from .padding import PAPER_TARGET, PaddedTensor, PadError, auto_target, pad_center
from .predict import predict_residual, reconstruct, write_predictions
from .train import TrainConfig, TrainResult, load_archive, save_archive, train
