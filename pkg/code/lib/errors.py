"""Exceptions raised by the Lens pipeline. InputError covers bad inputs, usage and
file formats (CLI exit code 2); ComputationError covers failures while computing
(CLI exit code 1)."""


class LensError(Exception):
    """Base class of every pipeline error."""


class InputError(LensError):
    exit_code = 2


class ComputationError(LensError):
    exit_code = 1

####################################################################################
# Traffic ingest

class BadMagic(InputError):
    pass

class TruncatedRecord(InputError):
    pass

class AlreadyAnonymized(InputError):
    pass

class EmptyFlow(InputError):
    pass

####################################################################################
# Tokenizer

class InvalidHexChar(InputError):
    pass

class IdOutOfRange(InputError):
    pass

class CorpusTooSmall(InputError):
    pass

####################################################################################
# Pre-training corpus

class NotEnoughFlows(InputError):
    pass

####################################################################################
# Model

class PositionOverflow(InputError):
    pass

class ShapeMismatch(InputError):
    pass

class NonFiniteLoss(ComputationError):
    pass

class EmptyEvalSet(InputError):
    pass

####################################################################################
# Fine-tuning and evaluation

class EmptyDataset(InputError):
    pass

class GranularityMismatch(InputError):
    pass

class LengthMismatch(InputError):
    pass

class NotNormalized(InputError):
    pass

class EmptyList(InputError):
    pass

####################################################################################
# Artifacts

class ArtifactFormatError(InputError):
    pass

class ChecksumMismatch(InputError):
    pass
