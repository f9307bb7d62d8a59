"""Dataset construction, ingestion and file formats."""

from .dataset import Dataset, make_dataset, class_capped_sample
from .synthetic import SyntheticConfig, make_synthetic, make_synthetic_split
from .io import save_dataset, load_dataset
from .cifar import load_cifar_binary

__all__ = [
    "Dataset",
    "make_dataset",
    "class_capped_sample",
    "SyntheticConfig",
    "make_synthetic",
    "make_synthetic_split",
    "save_dataset",
    "load_dataset",
    "load_cifar_binary",
]
