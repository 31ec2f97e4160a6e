"""Static taint analysis of EVM bytecode for flash-loan price-manipulation bugs."""

__version__ = "0.1.0"
