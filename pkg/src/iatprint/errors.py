"""Exception hierarchy shared by every stage of the pipeline."""


class IatprintError(Exception):
    """Base class for all errors raised by this package."""


# -- capture parsing -------------------------------------------------------

class PcapError(IatprintError):
    pass


class UnknownMagic(PcapError):
    pass


class PcapNgNotSupported(PcapError):
    pass


class UnsupportedLinkType(PcapError):
    pass


class TruncatedPacketHeader(PcapError):
    pass


class TruncatedPayload(PcapError):
    pass


class SnaplenExceeded(PcapError):
    pass


class FrameTooShort(PcapError):
    pass


class MalformedFrame(PcapError):
    pass


# -- rendering / augmentation ----------------------------------------------

class NonPositiveValue(IatprintError, ValueError):
    pass


class SingularTransform(IatprintError, ValueError):
    pass


# -- network ---------------------------------------------------------------

class ShapeMismatch(IatprintError, ValueError):
    pass


class StaleCache(IatprintError):
    pass


class ModelFormatError(IatprintError):
    pass


class BadModelMagic(ModelFormatError):
    pass


class TruncatedModel(ModelFormatError):
    pass


class ShapeChainMismatch(ModelFormatError):
    pass


# -- training / config -----------------------------------------------------

class EmptySplit(IatprintError, ValueError):
    pass


class SingleClassTraining(IatprintError, ValueError):
    pass


class DuplicateMac(IatprintError, ValueError):
    pass


class ConfigError(IatprintError, ValueError):
    pass
