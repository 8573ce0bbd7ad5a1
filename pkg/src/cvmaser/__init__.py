"""Truncated-Fock simulation of continuous-variable gates, Hamiltonian synthesis and micromaser state preparation."""

from .errors import (
    CVMaserError,
    ClosureExhaustedError,
    ContractError,
    DimensionError,
    DocumentParseError,
    SingularSectorError,
    SpaceMismatchError,
    StepBudgetError,
    ValidationError,
)
from .fock import (
    CONVENTION,
    DensityOperator,
    OperatorMatrix,
    SpaceSignature,
    StateVector,
    apply,
    expectation,
    fidelity,
    make_coherent,
    make_fock,
    make_vacuum,
    quadrature_ops,
    variance,
)
from .gates import GateDescriptor, build_gate
from .polynomial import HermitianPolynomial, realize
from .synthesis import GatePlan, PrimitiveSet, synthesize

__version__ = "0.1.0"
