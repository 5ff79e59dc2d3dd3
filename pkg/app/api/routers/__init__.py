"""API routers package."""

