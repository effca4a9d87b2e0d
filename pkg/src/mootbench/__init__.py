"""mootbench: pool-based multi-objective active-learning benchmarks on
MOOT-format tabular tasks."""

__version__ = "0.1.0"
