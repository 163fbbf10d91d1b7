"""Prompt modes, rendering, and mapping generated text back to labels.

Three nested modes control the generation space: Strict offers only the
unknown-category candidates, Complete adds the known categories, Extended
further mixes in cross-dataset labels. Templates are versioned resources;
their content hash is exposed so runs can log exactly what they rendered.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..errors import MissingLabels
from ..ingest.dataset import LabelSpace
from .digest import FeatureDigest

UNMAPPED = "UNMAPPED"

# Candidate normalization tolerance: edit distance over the longer
# normalized string. 0.2 absorbs casing/spacing while keeping distinct
# application names apart.
EDIT_DISTANCE_RATIO = 0.2


class SpsMode(str, Enum):
    STRICT = "strict"
    COMPLETE = "complete"
    EXTENDED = "extended"


@dataclass
class PromptBundle:
    mode: SpsMode
    candidates: list[str]
    digest: FeatureDigest
    rendered_text: str
    template_hash: str


def _dedupe(labels) -> list[str]:
    seen = set()
    out = []
    for label in labels:
        if label not in seen:
            seen.add(label)
            out.append(label)
    return out


def candidate_labels(mode: SpsMode, label_space: LabelSpace,
                     strict_source: str = "ood") -> list[str]:
    """Ordered candidate list for a mode; order follows the label space."""
    mode = SpsMode(mode)
    if mode is SpsMode.STRICT:
        source = (label_space.ood_labels if strict_source == "ood"
                  else label_space.id_labels)
        if not source:
            raise MissingLabels(f"strict mode needs {strict_source} labels")
        return list(source)
    if mode is SpsMode.COMPLETE:
        labels = _dedupe([*label_space.id_labels, *label_space.ood_labels])
        if not labels:
            raise MissingLabels("complete mode needs a populated label space")
        return labels
    if not label_space.extended_labels:
        raise MissingLabels("extended mode needs extended labels")
    return _dedupe([*label_space.id_labels, *label_space.ood_labels,
                    *label_space.extended_labels])


@lru_cache(maxsize=None)
def _template(mode: SpsMode, override_dir: str | None = None) -> tuple[str, str]:
    """(template text, sha256 hash); overridable by directory path."""
    if override_dir is not None:
        text = Path(override_dir, f"{mode.value}.txt").read_text("utf-8")
    else:
        text = resources.files("taonet.resources.templates").joinpath(
            f"{mode.value}.txt").read_text("utf-8")
    return text, hashlib.sha256(text.encode("utf-8")).hexdigest()


def template_hashes(override_dir: str | None = None) -> dict[str, str]:
    return {mode.value: _template(mode, override_dir)[1] for mode in SpsMode}


def render_prompt(mode: SpsMode, label_space: LabelSpace, digest: FeatureDigest,
                  strict_source: str = "ood", extra_context: dict | None = None,
                  template_dir: str | None = None) -> PromptBundle:
    """Fill the mode's template with the candidate list and digest block."""
    mode = SpsMode(mode)
    candidates = candidate_labels(mode, label_space, strict_source)
    text, digest_hash = _template(mode, template_dir)
    rendered = text.format(candidates=", ".join(candidates),
                           digest=digest.render(extra_context))
    return PromptBundle(mode=mode, candidates=candidates, digest=digest,
                        rendered_text=rendered, template_hash=digest_hash)


def _normalize(text: str) -> str:
    return "".join(ch for ch in text.casefold() if ch.isalnum())


def _edit_distance(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1,
                               current[j - 1] + 1,
                               previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def canonicalize_label(generated_text: str, candidates) -> str:
    """Map free-form generated text onto a candidate, or UNMAPPED.

    Exact match after normalization (casefold, alphanumerics only) wins;
    otherwise the nearest candidate by normalized edit distance, accepted
    only below the ratio threshold.
    """
    candidates = list(candidates)
    if not candidates:
        raise MissingLabels("canonicalization needs a non-empty candidate list")
    needle = _normalize(generated_text)
    normalized = [_normalize(c) for c in candidates]
    for candidate, norm in zip(candidates, normalized):
        if needle == norm:
            return candidate
    best_index, best_distance = None, None
    for index, norm in enumerate(normalized):
        distance = _edit_distance(needle, norm)
        if best_distance is None or distance < best_distance:
            best_index, best_distance = index, distance
    longest = max(len(needle), len(normalized[best_index]), 1)
    if best_distance / longest <= EDIT_DISTANCE_RATIO:
        return candidates[best_index]
    return UNMAPPED
