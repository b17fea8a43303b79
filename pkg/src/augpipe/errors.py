"""Exception hierarchy shared by every stage of the pipeline."""


class AugpipeError(Exception):
    """Base class for all errors raised by augpipe."""


class InvalidParameterError(AugpipeError, ValueError):
    pass


class ShapeError(AugpipeError, ValueError):
    pass


class AlignmentError(ShapeError):
    """RGB and depth planes disagree in size."""

    def __init__(self, message, frame_index=None, view=None):
        super().__init__(message)
        self.frame_index = frame_index
        self.view = view


class ConfigError(AugpipeError, ValueError):
    pass


class FormatError(AugpipeError, ValueError):
    """A file or byte stream does not match the expected encoding."""


class ProtocolError(AugpipeError):
    """The external depth backend broke the wire protocol."""


class BackendTimeout(ProtocolError, TimeoutError):
    pass


class IngestionError(AugpipeError):
    pass


class CompositionError(AugpipeError, ValueError):
    pass


class PreconditionError(AugpipeError, ValueError):
    pass
