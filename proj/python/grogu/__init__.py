"""GroGU grounding-utility metric."""

from ._core import (
    GroguError,
    Index,
    entropy_bounds,
    grogu,
    mrr,
    needle_gold_eval,
    recall_at_k,
    select_key_tokens,
    sign_test,
    token_entropy,
)

__all__ = [
    "GroguError",
    "Index",
    "entropy_bounds",
    "grogu",
    "mrr",
    "needle_gold_eval",
    "recall_at_k",
    "select_key_tokens",
    "sign_test",
    "token_entropy",
]
