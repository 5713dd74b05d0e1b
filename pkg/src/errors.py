"""
Exception hierarchy for the app-graph pipeline.
"""


class AppGraphError(Exception):
    """Base class for every error raised by this package."""


class RecordParseError(AppGraphError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateAppIdError(AppGraphError):
    def __init__(self, app_id):
        self.app_id = app_id
        super().__init__(f"duplicate appId '{app_id}'")


class BinningError(AppGraphError):
    pass


class KGFormatError(AppGraphError):
    def __init__(self, row_no, reason):
        self.row_no = row_no
        self.reason = reason
        super().__init__(f"row {row_no}: {reason}")


class SplitError(AppGraphError):
    pass


class UndefinedSupportError(AppGraphError):
    pass


class CorruptionExhaustedError(AppGraphError):
    pass


class TrainingError(AppGraphError):
    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class CheckpointError(AppGraphError):
    pass


class ConfigError(AppGraphError):
    pass


class SearchError(AppGraphError):
    def __init__(self, causes):
        self.causes = list(causes)
        lines = "; ".join(f"trial {i}: {c}" for i, c in self.causes)
        super().__init__(f"all search trials failed: {lines}")
