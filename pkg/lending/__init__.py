"""Lending-market simulator: pooled and curated supply, online learners and regret bookkeeping."""
from lending.errors import LendingError, ModelError, RejectedInput

__all__ = ["LendingError", "ModelError", "RejectedInput"]
__version__ = "0.1.0"
