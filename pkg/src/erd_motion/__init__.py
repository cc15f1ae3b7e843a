"""Encoder-Recurrent-Decoder models of human motion, built on a small numpy core."""

from .baselines import (NgramIndex, constant_displacement_forecast, make_lstm3lr,
                        ngram_continue, zero_motion_forecast)
from .erd_model import (ErdConfig, ErdModel, condition_on_prefix, generate, gmm_nll,
                        load_checkpoint, save_checkpoint, sequence_loss, unroll)
from .errors import (ArgumentError, CheckpointError, ConfigError, ErdError, NumericError,
                     ParseError, ShapeError)
from .evaluation import (evaluate_horizons, horizon_prediction_error, pck_curve,
                         viterbi_smooth)
from .mocap_data import (MocapSequence, NoiseSchedule, fit_standardizer, load_mocap,
                         standardize, destandardize, write_mocap)
from .nn_core import finite_difference_check
from .training import TrainConfig, train

__version__ = "0.1.0"
