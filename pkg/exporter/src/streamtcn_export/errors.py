class ExportError(Exception):
    """Source model cannot be converted (unsupported or non-sequential)."""


class ParityError(Exception):
    """Exported model disagrees with the source beyond tolerance."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
