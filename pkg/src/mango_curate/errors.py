"""Exception hierarchy.

Every error raised on bad *data* (as opposed to programming mistakes)
derives from :class:`CurationError`; the CLI maps those to exit code 2.
"""


class CurationError(Exception):
    pass


class RasterError(CurationError):
    pass


class TileFormatError(CurationError):
    pass


class ManifestError(CurationError):
    pass


class SignatureError(CurationError):
    pass


class BackgroundError(CurationError):
    pass


class SelectionError(CurationError):
    pass


class StratifyError(CurationError):
    pass
