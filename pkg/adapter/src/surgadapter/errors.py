class AdapterError(Exception):
    """Base class for adapter failures."""


class BackendError(AdapterError):
    """A backend could not be constructed or could not produce a mask."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class RequestError(AdapterError):
    """A client request violates the wire contract (maps to HTTP 400)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message
