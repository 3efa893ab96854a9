from .base import BackendRequest, EmbeddingVector, ModelBackend
from .http_client import HttpBackend
from .mock import MockBackend

__all__ = ["BackendRequest", "EmbeddingVector", "ModelBackend", "HttpBackend", "MockBackend"]
