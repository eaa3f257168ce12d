"""Volume-preserving exponential integrators (C++ core)."""

from ._core import (
    CertificateInvalidError,
    DimensionError,
    DivergenceError,
    DomainError,
    ParseError,
    UsageError,
    VpeiError,
    classify,
    converge,
    det,
    expm,
    gauss_legendre,
    integrate,
    is_symplectic,
    jacobi_elliptic,
    method_names,
    phi,
    problem_names,
    run,
    step_jacobian,
    tableau,
    volume,
    volume_ratio,
    vp_condition_residual,
)

__all__ = [name for name in dir() if not name.startswith("_")]
