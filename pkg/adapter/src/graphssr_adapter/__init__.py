"""Client for the graphssr reward service.

The service is the single source of truth for rewards; this package
does no scoring math of its own, it just speaks the wire schema.
"""

from .client import (
    EXPECTED_SCHEMA_VERSION,
    AdapterError,
    ClientConfig,
    RewardClient,
    SchemaVersionError,
    ScoreResult,
    ServiceError,
    TransportError,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "ClientConfig",
    "EXPECTED_SCHEMA_VERSION",
    "RewardClient",
    "SchemaVersionError",
    "ScoreResult",
    "ServiceError",
    "TransportError",
    "__version__",
]
