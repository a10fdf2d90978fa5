class TextControlException(Exception):
    """
    Base class for text-control exceptions.
    """
    # Whether the failure is caused by user input (bad files, flags, fonts) rather than a bug.
    user_error = False

    def __init__(self, *args, **kwargs):
        super(TextControlException, self).__init__(*args)
        self.message = kwargs.pop('message', args[0] if args else "No exception message supplied")

    def __str__(self):
        return f"{self.__class__.__name__:s}: {self.message:s}"


class ManifestError(TextControlException):
    """
    Raised when a dataset manifest record cannot be parsed.
    """
    user_error = True

    def __init__(self, *args, line_number: int = None, **kwargs):
        super(ManifestError, self).__init__(*args, **kwargs)
        self.line_number = line_number
        if line_number is not None:
            self.message = f"line {line_number}: {self.message}"


class MissingImageFile(ManifestError):
    """
    Raised when a manifest record names an image file that does not exist.
    """

    def __init__(self, *args, path: str = None, **kwargs):
        super(MissingImageFile, self).__init__(*args, **kwargs)
        self.path = path


class FontError(TextControlException):
    user_error = True


class UnknownFont(FontError):
    """
    Raised when a font id does not resolve in the font registry.
    """
    pass


class GlyphOverflow(FontError):
    """
    Raised when rendered text is taller than its region's bounding box.
    """
    pass


class ShapeMismatch(TextControlException):
    """
    Raised when tensors or images do not have the shape the configuration requires.
    """
    pass


class TimestepOutOfRange(TextControlException):
    pass


class ScheduleError(TextControlException):
    """
    Raised when a noise schedule cannot be built from the given range.
    """
    user_error = True


class LossContractError(TextControlException):
    """
    Raised when a loss receives inputs that violate its contract (negative losses, unpaired patches).
    """
    pass


class NonFiniteLoss(TextControlException):
    """
    Raised when a training step produces a non-finite loss. Carries a diagnostic dump.
    """

    def __init__(self, *args, diagnostics: dict = None, **kwargs):
        super(NonFiniteLoss, self).__init__(*args, **kwargs)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        return f"{super(NonFiniteLoss, self).__str__()} {self.diagnostics!r}"


class CheckpointError(TextControlException):
    """
    Raised when a checkpoint cannot be read, does not match the configuration, or cannot be written.
    """
    user_error = True


class RecognizerAccuracyError(TextControlException):
    """
    Raised when the recognizer does not reach the configured held-out accuracy floor.
    """
    user_error = True


class CodecQualityError(TextControlException):
    """
    Raised when the learned codec does not reach the configured reconstruction PSNR floor.
    """
    user_error = True


class MetricError(TextControlException):
    pass


class OcrEngineError(TextControlException):
    """
    Raised when an OCR engine fails to recognise a patch.
    """
    pass


class RequestError(TextControlException):
    """
    Raised when a sample request cannot be fulfilled (unconstructible hint, bad step count).
    """
    user_error = True
