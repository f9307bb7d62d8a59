"""Numeric kernel, losses, augmentations and perturbation mechanics."""

from .errors import *
from .kernel import (
    DenseArray,
    SeededRng,
    rng_for,
    l2_normalize,
    finite_diff_grad,
    pca_project,
)
from .utils import get_memory_mb, atomic_write_bytes, sha256_file
from .transforms import AugmentationPair, augment, augment_batch
from .losses import cross_entropy, nt_xent, csd, tue_objective, CsdReport
from .perturb import (
    PerturbationSet,
    AssignmentMap,
    make_perturbation_set,
    project_linf,
    clamp_valid,
    pgd_minimize,
    assign_classwise,
    swap_intra,
    swap_inter,
    interpolate_within,
    interpolate_across,
    synth_sn,
    save_perturbations,
    load_perturbations,
)

__all__ = [
    "DenseArray",
    "SeededRng",
    "rng_for",
    "l2_normalize",
    "finite_diff_grad",
    "pca_project",
    "get_memory_mb",
    "atomic_write_bytes",
    "sha256_file",
    "AugmentationPair",
    "augment",
    "augment_batch",
    "cross_entropy",
    "nt_xent",
    "csd",
    "tue_objective",
    "CsdReport",
    "PerturbationSet",
    "AssignmentMap",
    "make_perturbation_set",
    "project_linf",
    "clamp_valid",
    "pgd_minimize",
    "assign_classwise",
    "swap_intra",
    "swap_inter",
    "interpolate_within",
    "interpolate_across",
    "synth_sn",
    "save_perturbations",
    "load_perturbations",
]
