"""sparseloc: sparse high-resolution localization of point emitters from
low-resolution diffracted frames.

The library models the acquisition as a Gaussian blur followed by a block-sum
onto the sensor grid, reconstructs a nonnegative fine-grid image with at most
k nonzero pixels per frame via an exact sparsity reformulation solved by
proximal alternating minimization with penalty continuation, and scores
reconstructions with tolerance-disk Jaccard indices.
"""

__version__ = "0.1.0"

from .errors import ConvergenceError, DataFormatError, NumericalError
from .model import (
    CoarseFrame,
    FineImage,
    GridGeometry,
    Molecule,
    MoleculeSet,
    fine_index_to_nm,
    nm_to_fine_index,
)
from .operator import (
    FWHM_TO_SIGMA,
    Boundary,
    OperatorSpec,
    PsfSpec,
    SpectralEstimates,
    apply_A,
    apply_A_adjoint,
    block_sum,
    build_kernel,
    convolve,
    estimate_spectral,
)
from .knapsack import BoxSimplexCap, find_lambda, project_box_capped, project_signed
from .solver import (
    ConvergenceFlags,
    SolveReport,
    SolverConfig,
    SolverState,
    StageTrace,
    l0_reformulation_value,
    pam_minimize,
    penalized_objective,
    rho_bound,
    solve_frame,
    u_step,
    x_step,
)
from .simulate import (
    FrameStack,
    SimulationSpec,
    TubePhantom,
    UniformPhantom,
    rebin_molecule_frames,
    simulate,
    sum_frames,
)
from .fileio import (
    read_molecules,
    read_stack,
    render_histogram,
    write_molecules,
    write_stack,
)
from .evaluation import MatchResult, format_sweep_table, jaccard_sweep, match_frame

__all__ = [
    "__version__",
    "ConvergenceError",
    "DataFormatError",
    "NumericalError",
    "GridGeometry",
    "FineImage",
    "CoarseFrame",
    "Molecule",
    "MoleculeSet",
    "fine_index_to_nm",
    "nm_to_fine_index",
    "FWHM_TO_SIGMA",
    "Boundary",
    "PsfSpec",
    "OperatorSpec",
    "SpectralEstimates",
    "build_kernel",
    "convolve",
    "block_sum",
    "apply_A",
    "apply_A_adjoint",
    "estimate_spectral",
    "BoxSimplexCap",
    "project_box_capped",
    "project_signed",
    "find_lambda",
    "SolverConfig",
    "SolverState",
    "StageTrace",
    "ConvergenceFlags",
    "SolveReport",
    "penalized_objective",
    "rho_bound",
    "x_step",
    "u_step",
    "pam_minimize",
    "solve_frame",
    "l0_reformulation_value",
    "UniformPhantom",
    "TubePhantom",
    "SimulationSpec",
    "FrameStack",
    "simulate",
    "sum_frames",
    "rebin_molecule_frames",
    "read_stack",
    "write_stack",
    "read_molecules",
    "write_molecules",
    "render_histogram",
    "MatchResult",
    "match_frame",
    "jaccard_sweep",
    "format_sweep_table",
]
