# Adapters module


