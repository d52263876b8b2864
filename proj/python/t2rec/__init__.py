"""Transition-aware cross-domain sequential recommender bindings."""

from ._t2rec import (  # noqa: F401
    DataError,
    __version__,
    alignment_loss,
    cross_masks,
    domain_mask,
    feedback_contrast_loss,
    feedback_mask,
    propagate,
    rank_metrics,
    recommendation_loss,
    synthesize,
    transition_stats,
)
