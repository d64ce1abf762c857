"""Exception types shared across the simulator."""


class MagsimError(Exception):
    """Base class for all simulator errors."""


# --- mesh file parsing -------------------------------------------------------

class MeshError(MagsimError):
    pass


class TruncatedFile(MeshError):
    pass


class MalformedAscii(MeshError):
    pass


class EmptyMesh(MeshError):
    pass


class UnsupportedVersion(MeshError):
    pass


class MissingSection(MeshError):
    pass


class NoTetrahedra(MeshError):
    pass


class DanglingNodeTag(MeshError):
    pass


class MissingEmbedding(MeshError):
    pass


# --- physics ------------------------------------------------------------------

class InvalidMaterial(MagsimError):
    pass


class DegenerateElement(MagsimError):
    pass


class InvertedElement(MagsimError):
    pass


class NonFiniteEncountered(MagsimError):
    pass


class NotConverged(MagsimError):
    """Iteration caps hit; carries the best state found so far."""

    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


class SingularSystem(MagsimError):
    pass


# --- model descriptors ---------------------------------------------------------

class SchemaViolation(MagsimError):
    """Descriptor document violates the schema. `path` is a JSON-pointer-ish
    location such as 'material.poisson_ratio'."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

    @property
    def detail(self):
        return str(self)


class OverlappingMagnetRegions(MagsimError):
    pass


class MissingMesh(MagsimError):
    pass


class InvalidDimensions(MagsimError):
    pass


class UnknownModel(MagsimError):
    pass


# --- service -------------------------------------------------------------------

class BadParameter(MagsimError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class BusySolving(MagsimError):
    pass
