"""Exception hierarchy shared by every stage."""


class ArticulationError(Exception):
    """Base class; ``stage`` and ``part_id`` are filled in by the pipeline."""

    def __init__(self, *args, stage=None, part_id=None):
        super().__init__(*args)
        self.stage = stage
        self.part_id = part_id


class MeshError(ArticulationError, ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{': '.join(where + [message]) if where else message}")
        self.path = path
        self.line = line
        self.offset = offset


class EmptyMeshError(MeshError):
    pass


class DegenerateInputError(ArticulationError, ValueError):
    pass


class ManifestError(ArticulationError, ValueError):
    """Schema violation; ``path`` locates the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class CycleError(ManifestError):
    def __init__(self, cycle):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = list(cycle)


class DuplicatePartError(ManifestError):
    pass


class MissingMeshError(ArticulationError, FileNotFoundError):
    pass


class ServiceError(ArticulationError):
    pass


class ServiceNetworkError(ServiceError):
    pass


class ServiceTimeout(ServiceError, TimeoutError):
    pass


class InvalidResponse(ServiceError):
    pass


class TopologyMismatch(ServiceError):
    pass


class EmptyContactError(ArticulationError):
    pass


class DegenerateContactError(DegenerateInputError):
    pass


class RansacFailure(ArticulationError):
    pass


class CollinearPointsError(RansacFailure):
    pass


class BelowMinInliers(RansacFailure):
    pass


class NonFiniteLoss(ArticulationError, FloatingPointError):
    pass


class UnsetLimitsError(ArticulationError, ValueError):
    pass


class InvalidTreeError(ArticulationError, ValueError):
    pass


class LengthMismatch(ArticulationError, ValueError):
    pass


class InvalidSpecError(ArticulationError, ValueError):
    pass


class MissingPivotError(ArticulationError, ValueError):
    pass


class UrdfError(ArticulationError, ValueError):
    pass
