"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit 1,
numerical failures exit 2, oracle infeasibility exits 3.
"""


class FluxLdpError(Exception):
    """Base class for all package errors."""


class NetworkSyntaxError(FluxLdpError):
    """Malformed network DSL source, with 1-based line/column position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(FluxLdpError):
    """Invalid inputs: bad config fields, inconsistent vectors, bad arguments."""


class SimulationError(FluxLdpError):
    """Stochastic simulation failure: non-finite propensity or event-cap overrun."""


class IntegrationError(FluxLdpError):
    """ODE integration failure: blow-up or negativity beyond tolerance."""


class ConvergenceError(FluxLdpError):
    """Iterative solver failed to converge within its iteration budget."""


class OracleError(FluxLdpError):
    """Exact-solver infeasibility: state-space overflow or excessive truncation mass."""
