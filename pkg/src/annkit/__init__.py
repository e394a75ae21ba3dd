"""annkit: approximate near neighbor search on a desk-scale budget.

The package splits into metric/oracle primitives (core), random
projections (dimred), hashing-based indexes (lsh, families, ddpart),
deterministic linf trees (linf), norm embeddings (embed), closest-pair
algorithms (cpair), and a benchmark harness with a CLI (bench).
"""

from . import core, seeds, dimred, lsh, families, ddpart, linf, embed, cpair, bench
from .errors import BudgetError, DataError, InvariantError

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "DataError", "InvariantError",
    "bench", "core", "cpair", "ddpart", "dimred", "embed", "families",
    "linf", "lsh", "seeds", "__version__",
]
