"""Exception types raised across the package."""


class RegionOpfError(Exception):
    """Base class for all package errors."""


class CaseFormatError(RegionOpfError, ValueError):
    """Raised when a case file cannot be turned into a valid CaseData."""


class MissingSection(CaseFormatError):
    def __init__(self, name):
        super().__init__(f"case text has no '{name}' section")
        self.name = name


class MalformedRow(CaseFormatError):
    def __init__(self, line, expected, section=None, got=None):
        where = f" in '{section}'" if section else ""
        found = f", found {got}" if got is not None else ""
        super().__init__(f"line {line}{where}: expected {expected} columns{found}")
        self.line = line
        self.expected = expected
        self.section = section


class DuplicateBusId(CaseFormatError):
    def __init__(self, bus_id):
        super().__init__(f"bus id {bus_id} appears more than once")
        self.bus_id = bus_id


class DanglingReference(CaseFormatError):
    def __init__(self, kind, index, bus_id):
        super().__init__(f"{kind} row {index} references unknown bus {bus_id}")
        self.kind = kind
        self.index = index
        self.bus_id = bus_id


class DisconnectedGraph(RegionOpfError):
    def __init__(self, components=None):
        msg = "network graph is disconnected"
        if components is not None:
            msg += f" ({components} components)"
        super().__init__(msg)
        self.components = components


class ConvergenceFailure(RegionOpfError):
    def __init__(self, iterations, detail=""):
        super().__init__(f"no convergence after {iterations} iterations {detail}".strip())
        self.iterations = iterations


class NoFeasiblePartition(RegionOpfError):
    """No k-means restart put an in-service generator in every region."""


class RegionWithoutGenerator(RegionOpfError):
    def __init__(self, region):
        super().__init__(f"region {region} has no in-service generator")
        self.region = region


class SchemaMismatch(RegionOpfError):
    """A partition directory is missing files or uses an unsupported schema."""


class PiecewiseCostUnsupported(RegionOpfError):
    def __init__(self, gen_index):
        super().__init__(
            f"generator {gen_index} has a piecewise-linear cost; only polynomial costs are supported"
        )
        self.gen_index = gen_index


class NonconvexCost(RegionOpfError):
    def __init__(self, gen_index):
        super().__init__(f"generator {gen_index} has a negative quadratic cost coefficient")
        self.gen_index = gen_index


class ZeroReactanceBranch(RegionOpfError):
    def __init__(self, from_bus, to_bus):
        super().__init__(f"branch {from_bus}-{to_bus} has zero reactance")
        self.from_bus = from_bus
        self.to_bus = to_bus


class DegenerateBranch(RegionOpfError):
    def __init__(self, from_bus=None, to_bus=None):
        super().__init__(f"branch {from_bus}-{to_bus} has r = x = 0")


class SubproblemFailure(RegionOpfError):
    def __init__(self, region, iteration, status=None, state=None):
        super().__init__(f"region {region} subproblem failed at iteration {iteration} ({status})")
        self.region = region
        self.iteration = iteration
        self.status = status
        self.state = state


class NotConverged(RegionOpfError):
    """ADMM hit its iteration limit; ``solution`` and ``state`` hold the last iterate."""

    def __init__(self, iterations, residual, solution=None, state=None):
        super().__init__(
            f"ADMM did not converge in {iterations} iterations (worst residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual
        self.solution = solution
        self.state = state


class InvalidState(RegionOpfError):
    pass


class CentralizedSolveError(RegionOpfError):
    """A whole-network solve ended without an optimal point."""

    def __init__(self, status, message=""):
        label = getattr(status, "value", status)
        super().__init__(f"{label}: {message}" if message else str(label))
        self.status = status


class Infeasible(CentralizedSolveError):
    pass


class MaxIterations(CentralizedSolveError):
    pass


class IoError(RegionOpfError, OSError):
    """An output artifact could not be written."""
