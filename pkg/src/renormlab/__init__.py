"""Renormalization experiments for parabolic flows over hyperbolic maps.

The package builds the flow along the contracting direction of an
area-preserving torus map family, renormalizes ergodic integrals through
the map's action on flow time, computes transfer-operator resonances by
two independent pipelines, and probes the cohomological equation with
windowed primitives.  The cli module exposes config-driven suites.
"""

from . import cohomology, experiments, flow, functionals, spectral, torus
from .errors import (ConeDegeneracy, ConeExit, ConfigInvalid,
                     ContinuationFailure, FiberNonConvergence, LeafInvalid,
                     MeanNotZero, MissingArtifacts, NonConvergence,
                     ObstructionNonzero, RecursionStall, SignError,
                     SizeOverflow, StepUnderflow, TransversalityFailure)
from .experiments import ExperimentConfig, load_config, run
from .flow import VectorFieldSpec, cocycle, eval_V, flow_path
from .observables import Observable
from .torus import MapSpec, TorusPoint, wrap

__version__ = "0.1.0"

__all__ = [
    "ConeDegeneracy", "ConeExit", "ConfigInvalid", "ContinuationFailure",
    "ExperimentConfig", "FiberNonConvergence", "LeafInvalid", "MapSpec",
    "MeanNotZero", "MissingArtifacts", "NonConvergence", "Observable",
    "ObstructionNonzero", "RecursionStall", "SignError", "SizeOverflow",
    "StepUnderflow", "TorusPoint", "TransversalityFailure",
    "VectorFieldSpec", "cocycle", "cohomology", "eval_V", "experiments",
    "flow", "flow_path", "functionals", "load_config", "run", "spectral",
    "torus", "wrap", "__version__",
]
