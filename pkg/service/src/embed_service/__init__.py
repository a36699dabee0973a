"""Embedding microservice speaking the echometer remote protocol."""

__version__ = "0.1.0"

from embed_service.app import create_app

__all__ = ["create_app", "__version__"]
