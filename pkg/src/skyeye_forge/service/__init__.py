"""Human-in-the-loop review service (FastAPI) and its sample store."""

from .app import ServiceSettings, create_app
from .store import ReviewStore

__all__ = ["create_app", "ServiceSettings", "ReviewStore"]
