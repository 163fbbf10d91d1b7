"""Semantic prompt strategy: digests, templates, label canonicalization."""

from .digest import FeatureDigest, build_digest, shannon_entropy
from .prompts import (
    EDIT_DISTANCE_RATIO,
    UNMAPPED,
    PromptBundle,
    SpsMode,
    candidate_labels,
    canonicalize_label,
    render_prompt,
    template_hashes,
)

__all__ = [
    "EDIT_DISTANCE_RATIO", "FeatureDigest", "PromptBundle", "SpsMode",
    "UNMAPPED", "build_digest", "candidate_labels", "canonicalize_label",
    "render_prompt", "shannon_entropy", "template_hashes",
]
