# Infrastructure module


