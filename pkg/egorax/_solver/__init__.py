from .base import (
    AbstractClassicalSolver as AbstractClassicalSolver,
    AbstractQuantumSolver as AbstractQuantumSolver,
)
from .dense import (
    DenseEigen as DenseEigen,
    eigendecompose as eigendecompose,
    propagator_matrix as propagator_matrix,
)
from .implicit_midpoint import ImplicitMidpoint as ImplicitMidpoint
from .leapfrog import Leapfrog as Leapfrog
from .split_step import SplitStep as SplitStep
