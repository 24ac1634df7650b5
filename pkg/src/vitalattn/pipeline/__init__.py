from .config import TrainConfig
from .evaluation import benchmark_grid, evaluate_model, explain_window, run_benchmark
from .serialization import ModelFileError, load_model, save_model
from .training import TrainedModel, TrainingError, build_model, train_model

__all__ = [
    "ModelFileError",
    "TrainConfig",
    "TrainedModel",
    "TrainingError",
    "benchmark_grid",
    "build_model",
    "evaluate_model",
    "explain_window",
    "load_model",
    "run_benchmark",
    "save_model",
    "train_model",
]
