"""Built-in catalogue of example data set models.

Each constructor returns a :class:`~dsm_geom.core.ModelDefinition` whose
oracle record carries the closed forms used for testing (metric,
connection, affine coordinates, Massieu potential, special constants).
"""
from __future__ import annotations

from ..core import ModelDefinition
from .gaussian import gaussian_kl, gaussian_sumsq
from .gce import grand_canonical
from .gumbel import gumbel
from .regression import regression_dlambda, regression_ls
from .vmf import vmf_cylinder, vmf_sphere

CatalogueEntry = ModelDefinition

_BUILDERS = {
    "gaussian-kl": gaussian_kl,
    "gaussian-sumsq": gaussian_sumsq,
    "regression-ls": regression_ls,
    "regression-dlambda": regression_dlambda,
    "gce": grand_canonical,
    "vmf-sphere": vmf_sphere,
    "vmf-cylinder": vmf_cylinder,
    "gumbel": gumbel,
}

MODEL_NAMES = tuple(_BUILDERS)


def build(name: str, **kwargs) -> ModelDefinition:
    """Construct a catalogue entry by its CLI name."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(
            f"unknown model '{name}'; choose from {', '.join(_BUILDERS)}"
        ) from None
    return builder(**kwargs)


def catalogue() -> dict:
    """All entries with default constructor arguments."""
    return {name: build(name) for name in MODEL_NAMES}


__all__ = [
    "CatalogueEntry",
    "MODEL_NAMES",
    "build",
    "catalogue",
    "gaussian_kl",
    "gaussian_sumsq",
    "regression_ls",
    "regression_dlambda",
    "grand_canonical",
    "vmf_sphere",
    "vmf_cylinder",
    "gumbel",
]
