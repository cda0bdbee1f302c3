"""Gray learning: robust classification on training sets contaminated with
mislabeled out-of-distribution samples."""

from graylearn.losses import LossMethod, Method
from graylearn.numerics import ModelParams, forward, init_params, softmax

__version__ = "0.1.0"

__all__ = ["LossMethod", "Method", "ModelParams", "forward", "init_params", "softmax"]
