from .tensor import Tensor, ShapeError, no_grad
from .optim import Adam, TrainingDivergedError

__all__ = ["Tensor", "ShapeError", "no_grad", "Adam", "TrainingDivergedError"]
