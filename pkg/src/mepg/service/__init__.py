"""HTTP service: FastAPI app factory plus the persistent job store."""

from .app import ServiceSettings, create_app, make_generation_runner
from .jobs import JobRecord, JobStore, QueueFull, atomic_write_json

__all__ = [
    "ServiceSettings", "create_app", "make_generation_runner",
    "JobStore", "JobRecord", "QueueFull", "atomic_write_json",
]
