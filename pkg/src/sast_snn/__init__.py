"""Leaky integrate-and-fire spiking networks trained with surrogate-forward
BPTT, optionally with a sharpness-aware (SAM) two-pass step, plus hard-spike,
fixed-point and diagnostic evaluation."""

from .bptt import Gradient, backward, batch_gradient, cross_entropy, loss_only
from .errors import (
    ConfigError,
    InvalidModeError,
    MalformedFileError,
    OutOfRangeError,
    SastError,
    ShapeError,
)
from .evaluation import EvalResult, corruption_sweep, evaluate, transfer_gap
from .events import (
    Event,
    EventStream,
    LabeledDataset,
    SyntheticSpec,
    bin_events,
    class_stratified_split,
    drop_events,
    make_synthetic_dataset,
    parse_nmnist_file,
)
from .kernels import BACKEND
from .network import (
    NetworkParams,
    SurrogateConfig,
    count_parameters,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .optim import TrainConfig, TrainRecord, sweep_rho, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "Event", "EventStream", "EvalResult", "Gradient", "InvalidModeError",
    "LabeledDataset", "MalformedFileError", "NetworkParams", "OutOfRangeError", "SastError", "ShapeError",
    "SurrogateConfig", "SyntheticSpec", "TrainConfig", "TrainRecord", "backward", "batch_gradient",
    "bin_events", "class_stratified_split", "corruption_sweep", "count_parameters", "cross_entropy", "drop_events", "evaluate",
    "forward", "init_params", "load_checkpoint", "loss_only", "make_synthetic_dataset", "parse_nmnist_file",
    "save_checkpoint", "sweep_rho", "train", "transfer_gap",
]
