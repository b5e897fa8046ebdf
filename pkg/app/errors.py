"""Exception hierarchy shared across the framework.

Every error carries a short machine code; the CLI prints it as
``ERROR:<code>:<message>``.
"""

from typing import Iterable, List, Optional


class ResMatchError(Exception):
    code = "runtime"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class StructuralError(ResMatchError):
    """Shapes or lengths of paired inputs do not line up."""

    code = "structural"


class ConfigurationError(ResMatchError):
    code = "config"


class DatasetLoadError(ResMatchError):
    code = "load"

    def __init__(self, message: str, missing_paths: Optional[Iterable[str]] = None):
        self.missing_paths: List[str] = list(missing_paths or [])
        if self.missing_paths:
            message = f"{message}: " + ", ".join(self.missing_paths)
        super().__init__(message)


class RecordError(ResMatchError):
    code = "record"

    def __init__(self, record_id: str, message: str):
        self.record_id = record_id
        super().__init__(f"record {record_id}: {message}")


class EmbeddingComputationError(ResMatchError):
    code = "embedding"


class EmbeddingTransportError(ResMatchError):
    code = "transport"

    def __init__(self, endpoint: str, message: str):
        self.endpoint = endpoint
        super().__init__(f"{endpoint}: {message}")


class EmbeddingProtocolError(ResMatchError):
    code = "protocol"


class NonFiniteLossError(ResMatchError):
    code = "nonfinite"

    def __init__(self, batch_ids: Iterable[str], value: float):
        self.batch_ids = list(batch_ids)
        self.value = value
        super().__init__(f"non-finite loss {value} on batch [{', '.join(self.batch_ids)}]")
