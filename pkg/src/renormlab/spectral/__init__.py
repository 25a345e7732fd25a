"""Projectivized extension, transfer operators and resonance pipelines."""

from .analytic import (analytic_eigenfunction, analytic_linear_spectrum,
                       contraction_factor)
from .extension import (ExtMapSpec, ExtPoint, TransferGrid, backward_step,
                        cone_bracket, ext_map, ext_map_inverse,
                        linear_fiber_map, linear_fiber_map_inverse,
                        transfer_adjoint_apply, transfer_apply,
                        transfer_matrix, transfer_weight)
from .galerkin import (DENSE_CAP, GalerkinEigenData, ObstructionFunctional,
                       ProjectedGrid, eigs, eigs_iterative,
                       fourier_mode_energy, galerkin_eigendata,
                       galerkin_matrix, galerkin_operator, galerkin_pipeline,
                       grid_eigenvalues, obstruction_functionals)
from .leaves import (AdmissibleLeaf, bounded_functional_check, leaf_pairing,
                     lifted_scalar, random_leaf_family, sampled_seminorm,
                     test_profiles)
from .oneforms import (flow_window_pairing, gradient_pairing_check,
                       lifted_differential, one_form_transfer,
                       renorm_pairing_check, transfer_form, unit_step_weight,
                       vector_bump)
from .traces import (SpectralResult, TraceSequence, determinant_coeffs,
                     determinant_pipeline, linear_trace_closed_form,
                     orbit_trace, resonances_from_determinant)

__all__ = [
    "DENSE_CAP",
    "AdmissibleLeaf",
    "ExtMapSpec",
    "ExtPoint",
    "GalerkinEigenData",
    "ObstructionFunctional",
    "ProjectedGrid",
    "SpectralResult",
    "TraceSequence",
    "TransferGrid",
    "analytic_eigenfunction",
    "analytic_linear_spectrum",
    "backward_step",
    "bounded_functional_check",
    "cone_bracket",
    "contraction_factor",
    "determinant_coeffs",
    "determinant_pipeline",
    "eigs",
    "eigs_iterative",
    "ext_map",
    "ext_map_inverse",
    "flow_window_pairing",
    "fourier_mode_energy",
    "galerkin_eigendata",
    "galerkin_matrix",
    "galerkin_operator",
    "galerkin_pipeline",
    "gradient_pairing_check",
    "grid_eigenvalues",
    "leaf_pairing",
    "lifted_differential",
    "lifted_scalar",
    "linear_fiber_map",
    "linear_fiber_map_inverse",
    "linear_trace_closed_form",
    "obstruction_functionals",
    "one_form_transfer",
    "orbit_trace",
    "random_leaf_family",
    "renorm_pairing_check",
    "resonances_from_determinant",
    "sampled_seminorm",
    "test_profiles",
    "transfer_adjoint_apply",
    "transfer_apply",
    "transfer_form",
    "transfer_matrix",
    "transfer_weight",
    "unit_step_weight",
    "vector_bump",
]
