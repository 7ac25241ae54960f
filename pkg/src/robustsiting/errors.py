"""Exception hierarchy shared by every module."""


class RobustSitingError(Exception):
    """Base class. The CLI maps subclasses of InputError to exit code 2, the rest to 1."""


class InputError(RobustSitingError):
    pass


class SolverError(RobustSitingError):
    pass


# geometry

class DegeneratePolygon(InputError):
    pass


class EmptyRegion(InputError):
    def __init__(self, region: int):
        super().__init__(f"region {region} contains no lattice point")
        self.region = region


class UnsupportedMetric(InputError):
    pass


class MissingDistance(InputError):
    def __init__(self, site, scenario):
        super().__init__(f"distance table has no entry for site {site}, scenario {scenario}")
        self.site = site
        self.scenario = scenario


class MalformedFile(InputError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


# riskdist

class OrphanPoint(InputError):
    def __init__(self, index: int):
        super().__init__(f"point {index} lies outside every uncertainty region")
        self.index = index


class InfeasibleUncertaintySet(SolverError):
    pass


# simplex

class NumericalBreakdown(SolverError):
    pass


class TooLarge(RobustSitingError):
    pass


# branchbound

class NodeLimitExceeded(SolverError):
    """Raised when the node or time budget runs out; carries the best known solution."""

    def __init__(self, message, incumbent=None, objective=None, bound=None, nodes=0):
        super().__init__(message)
        self.incumbent = incumbent
        self.objective = objective
        self.bound = bound
        self.nodes = nodes


# engines

class IterLimit(SolverError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StalledCuts(SolverError):
    pass


# bounds

class ZeroOptimum(RobustSitingError):
    pass
