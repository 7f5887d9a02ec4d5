class PolarQuantError(Exception):
    pass


class InvalidArgument(PolarQuantError, ValueError):
    pass


class FormatError(PolarQuantError):
    pass


class CodebookValidationError(FormatError):
    pass


class InvalidState(PolarQuantError):
    pass
