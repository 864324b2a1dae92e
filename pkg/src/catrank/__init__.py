"""catrank: rank the categories of a labeled entity graph by descriptive power.

Pipeline stages: ingest graph/categories/features/votes, embed entities via
random-walk skip-gram, build close-neighbor relations, score categories by
conductance and binomial-tail surprise, and evaluate rankings against
preference votes.
"""

__version__ = "0.1.0"

from .errors import DataError

__all__ = ["DataError", "__version__"]
