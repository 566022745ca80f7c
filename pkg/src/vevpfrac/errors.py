"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveJacobian(SimulationError):
    """det(F) <= 0: the deformation is no longer orientation-preserving."""


class DomainError(SimulationError):
    """An input lies outside the validated range of a model."""


class NonFiniteState(SimulationError):
    """An internal-variable update produced non-finite entries (dt too large)."""


class NonFiniteTangent(SimulationError):
    """A perturbation column of the numerical tangent is non-finite."""


class ElementInverted(SimulationError):
    """An element's Jacobian determinant is non-positive at a quadrature point."""

    def __init__(self, element_id, message=None):
        self.element_id = element_id
        super().__init__(message or f"element {element_id} is inverted")


class AssemblyDimensionMismatch(SimulationError):
    """Field vectors do not match the mesh dimensions."""


class UnknownNodeSet(SimulationError):
    """A boundary condition references a node set the mesh does not define."""


class NewtonDiverged(SimulationError):
    """The displacement Newton loop did not converge (increment too large)."""


class LinearSolveFailed(SimulationError):
    """A sparse factorization failed or returned non-finite values."""


class LateralIterationDiverged(SimulationError):
    """The material-point mixed-control iteration did not converge."""


class ConfigError(SimulationError):
    """Base class for configuration-file errors."""


class MissingKey(ConfigError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"missing required config key '{key}'")


class UnknownKey(ConfigError):
    def __init__(self, key, line_no):
        self.key = key
        self.line_no = line_no
        super().__init__(f"unknown config key '{key}' (line {line_no})")


class UnparsableValue(ConfigError):
    def __init__(self, key, raw, line_no):
        self.key = key
        self.line_no = line_no
        super().__init__(f"cannot parse value '{raw}' for key '{key}' (line {line_no})")


class MeshFormatError(SimulationError):
    """Base class for mesh-file errors."""


class MalformedSection(MeshFormatError):
    def __init__(self, message, line_no):
        self.line_no = line_no
        super().__init__(f"{message} (line {line_no})")


class DanglingNodeReference(MeshFormatError):
    """An element or node set references a node id that does not exist."""


class InvertedElement(MeshFormatError):
    """A mesh-file element has a non-positive reference Jacobian."""


class DegenerateGeometry(SimulationError):
    """Mesh-generator parameters describe an empty or self-intersecting shape."""
