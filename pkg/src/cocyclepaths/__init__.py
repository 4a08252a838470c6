"""Periodic linear cocycles: spectra, domination, and certified small paths."""
from .connection import (
    GluedMap,
    SizeReport,
    build_glued,
    concatenate_maps,
    connection_size,
    homothety_conjugate,
    size_inequality_check,
    strong_stable_membership,
)
from .core import PeriodicCocycle, bound_of, dist_cocycle, first_return, operator_norm
from .domination import DominationReport, bdp_branch, is_N_dominated, minimal_domination_N
from .errors import CocycleError
from .generators import GeneratorSpec, generate
from .paths import CocyclePath, PathRadiusReport, concat_paths, path_radius, reverse_path, sample_path
from .spectral import (
    SaddleSplitting,
    Spectrum,
    Subbundle,
    is_saddle,
    min_angle,
    spectrum_of,
    stable_unstable_splitting,
    strong_stable_dims,
    strong_unstable_dims,
)
from .synthesis import (
    SynthesisOutcome,
    pipeline_small_angle,
    push_moduli,
    realify,
    realify_2d,
    small_angle,
    small_angle_2d,
)
from .verification import Certificate, verify_outcome

__version__ = "0.1.0"
