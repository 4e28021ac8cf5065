class HeatBemError(Exception):
    """Base class for all solver errors"""


class GeometryError(HeatBemError):
    pass


class SpaceError(HeatBemError):
    pass


class KernelDomainError(HeatBemError):
    """Argument outside the slit plane C \\ (-inf, 0]"""


class SingularPointError(HeatBemError):
    """Kernel evaluated at coincident source and target"""


class NearSingularError(HeatBemError):
    """Potential evaluated too close to the boundary"""

    def __init__(self, message: str, indices=None):
        super().__init__(message)
        self.indices = [] if indices is None else list(indices)


class SchemeError(HeatBemError):
    pass


class ContourError(HeatBemError):
    """A CQ frequency left the admissible region of the operators"""

    def __init__(self, message: str, frequency_index: int = -1):
        super().__init__(message)
        self.frequency_index = frequency_index


class ConvergenceError(HeatBemError):
    pass


class ConfigError(HeatBemError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
