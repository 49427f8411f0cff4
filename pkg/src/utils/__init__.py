# Shared utilities: logging, errors, profiling
