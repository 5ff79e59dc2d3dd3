# Services module


