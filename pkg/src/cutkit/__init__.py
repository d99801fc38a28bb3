"""Circuit cutting with local unitary decompositions.

Space-like cuts of bipartite unitaries via a double Hadamard test, clustered
Hamiltonian simulation built on those cuts, time-like wire cuts with
measure-and-prepare channels, and brute-force oracles for all of them.
"""

from .decomp import (
    ExtentResult,
    LocalDecomposition,
    SchmidtDecomposition,
    choi_robustness,
    magnitude,
    operator_schmidt,
    optimal_separable_pair,
    pauli_decomposition,
    product_extent_schmidt,
    pure_robustness,
)
from .errors import (
    ConfigError,
    CutkitError,
    DegenerateInputError,
    NotUnitaryError,
    NumericalFailure,
    SamplerFailure,
    ShapeError,
)
from .harness import CutEstimate
from .hamsim import ClusteredHamiltonian, hamsim_estimate, load_hamiltonian, make_plan, parse_hamiltonian
from .spacecut import CutLayout, estimate
from .statesim import GateOp, Observable, StateVector
from .tensor import BipartiteShape
from .timecut import timecut_estimate

__version__ = "0.1.0"
