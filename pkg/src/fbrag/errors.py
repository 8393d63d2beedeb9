from __future__ import annotations

from typing import Optional

'''
All errors raised by fbrag derive from FbRagError. The CLI maps the families to exit codes:
ConfigError -> 2, BackendError -> 3, DatasetError -> 4.
'''

# this note is added to the exception when an error is already logged
ALREADY_LOGGED_ERROR_NOTE = "fbrag already logged the error"


class FbRagError(Exception):
    pass


class InvalidArgumentError(FbRagError, ValueError):
    pass


class BackendError(FbRagError):
    def __init__(self, request_id: str, reason: str):
        super().__init__(f'Request {request_id} failed: {reason}')
        self.request_id = request_id
        self.reason = reason


class BackendUnavailableError(BackendError):
    '''Transport failure that survived every retry.'''


class ProtocolError(BackendError):
    def __init__(self, request_id: str, reason: str, status: Optional[int] = None):
        super().__init__(request_id, reason if status is None else f'HTTP {status}: {reason}')
        self.status = status


class StageError(FbRagError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f'Stage {stage} failed: {cause!r}')
        self.stage = stage
        self.cause = cause


class ConfigError(FbRagError):
    def __init__(self, key: str, reason: str):
        super().__init__(f'Config key "{key}": {reason}')
        self.key = key
        self.reason = reason


class DatasetError(FbRagError):
    def __init__(self, path: str, line: Optional[int], reason: str):
        where = path if line is None else f'{path}, line {line}'
        super().__init__(f'Dataset error in {where}: {reason}')
        self.path = path
        self.line = line
        self.reason = reason
