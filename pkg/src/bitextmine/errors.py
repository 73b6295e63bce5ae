"""Exception types shared across the package."""


class MiningError(Exception):
    """Base class for all errors raised by bitextmine."""


class EmptySentence(MiningError):
    """A sentence produced zero tokens."""


class EmptyCorpus(MiningError):
    """A corpus required to be non-empty was empty."""


class EmptyInput(MiningError):
    """An index build received no vectors."""


class EmptyPool(MiningError):
    """An evaluation received an empty distractor pool."""


class DimensionMismatch(MiningError):
    """Vector or matrix shapes are inconsistent."""


class LengthMismatch(MiningError):
    """Two sequences required to be equal-length differ."""


class KeyMismatch(MiningError):
    """Two mappings required to share a key set do not."""


class ConfigInvalid(MiningError):
    """A configuration value violates its documented range."""


class InvalidPartitionCount(MiningError):
    """Partition count outside [1, n] or n_probe outside [1, c]."""


class DegenerateBatch(MiningError):
    """A training batch is too small to define the loss."""


class DegenerateVariance(MiningError):
    """Correlation undefined because one input has zero variance."""


class InsufficientTargets(MiningError):
    """Not enough candidate targets to mine the requested negatives."""


class DuplicateId(MiningError):
    """The same id was supplied twice where ids must be unique."""


class UnknownDocument(MiningError):
    """A document referenced during scoring is not known."""


class NoCandidates(MiningError):
    """Document matching found no candidate target document."""


class ParseError(MiningError):
    """A text input file or config file is malformed."""


class VersionMismatch(MiningError):
    """A serialized file declares an unsupported format version."""


class CorruptFile(MiningError):
    """A serialized file failed magic, length, or structure checks."""
