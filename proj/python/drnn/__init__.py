"""Sufficient dimension reduction with rank-regularized neural networks."""

from ._drnn import (
    DrnnError,
    IoError,
    NumericalError,
    ValidationError,
    classical,
    cv_select_d,
    fit_density,
    fit_nn,
    generate,
    proj_distance,
    procrustes_distance,
    run_cli,
)

__all__ = [
    "DrnnError",
    "IoError",
    "NumericalError",
    "ValidationError",
    "classical",
    "cv_select_d",
    "fit_density",
    "fit_nn",
    "generate",
    "proj_distance",
    "procrustes_distance",
    "run_cli",
]
