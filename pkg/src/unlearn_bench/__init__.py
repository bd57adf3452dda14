"""unlearn-bench: benchmarking harness for machine unlearning.

Evaluates unlearning algorithms along three axes that rudimentary loss-MIA
benchmarks miss: worst-case privacy under strong membership-inference
attacks, update leakage from comparing pre/post-unlearning outputs, and
accuracy under iterated unlearning.
"""

__version__ = "0.1.0"

from .errors import BenchError

__all__ = ["BenchError", "__version__"]
