"""Exception hierarchy shared by every stage of the pipeline."""


class NormVerifyError(Exception):
    """Base class for all pipeline errors."""


class DataError(NormVerifyError, ValueError):
    """Input data violates a structural rule."""


class FormatError(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DuplicateConcept(DataError):
    pass


class DuplicateCell(DataError):
    pass


class UnknownDomain(DataError):
    pass


class InconsistentCategory(DataError):
    pass


class CrossDomainCell(DataError):
    pass


class RaterCountOverflow(DataError):
    pass


class UnknownId(DataError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class InvalidThreshold(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# probing
class MissingPlaceholder(DataError):
    pass


class InvalidProbability(DataError):
    pass


class OracleUnreachable(NormVerifyError):
    pass


class CacheCorrupt(NormVerifyError):
    pass


class PolicyViolation(NormVerifyError):
    pass


# signal detection
class DomainError(DataError):
    pass


class NoTargets(DataError):
    pass


class NoDistractors(DataError):
    pass


# semantic space / triplets
class ZeroVector(DataError):
    def __init__(self, concept: str):
        super().__init__(f"concept {concept!r} has no features set; cosine distance is undefined")
        self.concept = concept


class DuplicateWord(DataError):
    pass


class InfeasibleCondition(DataError):
    pass


class MissingVotes(DataError):
    pass


class EmptyCondition(DataError):
    pass


class ConfigError(NormVerifyError):
    pass
