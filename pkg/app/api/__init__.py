"""API package for FastAPI routers and models."""

