"""Dynamic jury evaluation: per-instance judge reliability prediction,
top-K jury assembly, and reliability-weighted score aggregation, with
static-jury baselines and a statistics harness."""

__version__ = "0.1.0"
