"""Exception hierarchy shared by all irredet modules."""


class IrredetError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(IrredetError, ValueError):
    pass


class ImageFormatError(IrredetError):
    """Base for image decoding failures."""


class UnreadableFileError(ImageFormatError, OSError):
    pass


class MalformedHeaderError(ImageFormatError):
    pass


class MalformedPayloadError(ImageFormatError):
    pass


class UnsupportedFormatError(ImageFormatError):
    pass


class SingularTransformError(IrredetError, ValueError):
    pass


class MarginError(IrredetError, ValueError):
    """Point too close to the image border for the requested operator."""


class IncompatibilityError(IrredetError, ValueError):
    """Operands that must share a shape or identity do not."""


class IncompatibleDescriptorError(IncompatibilityError):
    pass


class ConsistencyError(IrredetError, ValueError):
    """Inputs that should describe the same point set do not line up."""


class DegeneracyError(IrredetError, ValueError):
    """Too few or geometrically degenerate correspondences for a fit."""


class CalibrationError(IrredetError, RuntimeError):
    pass


class DegenerateDataError(IrredetError, ValueError):
    """Training data lacks one of the two classes."""
