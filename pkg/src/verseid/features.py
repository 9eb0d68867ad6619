"""Hand-crafted verse features: stylometrics, scaling, and categorical one-hots.

All token-based quantities are computed on normalized text so the same verse
written with Arabic or Persian letter variants yields identical features.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Verse
from .normalize import NormalizationConfig, normalize_verse

FEATURE_NAMES = (
    "word_count",
    "distinct_word_count",
    "avg_word_length",
    "hapax_ratio",
    "mean_hemistich_length",
    "punctuation_density",
    "symmetry_ratio",
)

# Persian marks, listed explicitly even though the general-category test
# already covers them; the density definition depends on them being counted.
PERSIAN_PUNCTUATION = ("،", "؛", "؟")  # ، ؛ ؟


def _is_punct(ch: str) -> bool:
    return ch in PERSIAN_PUNCTUATION or unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class StylometricVector:
    word_count: float
    distinct_word_count: float
    avg_word_length: float
    hapax_ratio: float
    mean_hemistich_length: float
    punctuation_density: float
    symmetry_ratio: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


def stylometric_features(
    verse: Verse, cfg: NormalizationConfig = NormalizationConfig()
) -> StylometricVector:
    """Compute the seven surface features of one verse."""
    h1, h2 = normalize_verse(verse, cfg)
    t1, t2 = h1.split(), h2.split()
    tokens = t1 + t2
    n = len(tokens)

    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    hapaxes = sum(1 for c in counts.values() if c == 1)

    chars = [ch for ch in h1 + h2 if not ch.isspace()]
    punct = sum(1 for ch in chars if _is_punct(ch))

    return StylometricVector(
        word_count=float(n),
        distinct_word_count=float(len(counts)),
        avg_word_length=(sum(len(t) for t in tokens) / n) if n else 0.0,
        hapax_ratio=(hapaxes / n) if n else 0.0,
        mean_hemistich_length=(len(t1) + len(t2)) / 2.0,
        punctuation_density=(punct / len(chars)) if chars else 0.0,
        symmetry_ratio=len(t1) / max(1, len(t2)),
    )


@dataclass
class Scaler:
    """Per-dimension z-scoring fitted on training data only.

    Dimensions with zero variance keep their mean but divide by 1 so the
    transform stays finite; their indices are recorded in ``constant_dims``.
    """

    mean_: np.ndarray | None = None
    std_: np.ndarray | None = None
    constant_dims: list[int] = field(default_factory=list)

    def fit(self, x: np.ndarray) -> "Scaler":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("Scaler.fit expects a non-empty 2-D array")
        self.mean_ = x.mean(axis=0)
        std = x.std(axis=0)
        self.constant_dims = [int(i) for i in np.flatnonzero(std == 0.0)]
        std = np.where(std == 0.0, 1.0, std)
        self.std_ = std
        return self

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.mean_ is None or self.std_ is None:
            raise ValueError("Scaler is not fitted")
        return (np.asarray(x, dtype=np.float64) - self.mean_) / self.std_

    def to_dict(self) -> dict:
        if self.mean_ is None or self.std_ is None:
            raise ValueError("Scaler is not fitted")
        return {
            "mean": self.mean_.tolist(),
            "std": self.std_.tolist(),
            "constant_dims": self.constant_dims,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        s = cls()
        s.mean_ = np.asarray(d["mean"], dtype=np.float64)
        s.std_ = np.asarray(d["std"], dtype=np.float64)
        s.constant_dims = [int(i) for i in d["constant_dims"]]
        return s

    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


DEFAULT_TOP_METERS = 14


@dataclass
class MeterClassMap:
    """Meter string to class id, with a catch-all class for the tail.

    The most frequent ``n_top`` meters (by poem count, lexicographic
    tie-break) receive ids 0..n_top-1 in that order; every other meter,
    including strings unseen at fit time, maps to the final "other" class.
    The one-hot width is always ``n_top + 1`` so the model input size does
    not depend on how many meters happened to survive filtering.
    """

    class_of_meter: dict[str, int]
    n_top: int = DEFAULT_TOP_METERS

    @property
    def n_classes(self) -> int:
        return self.n_top + 1

    @property
    def other_class(self) -> int:
        return self.n_top

    def class_of(self, meter: str) -> int:
        return self.class_of_meter.get(meter, self.other_class)

    def to_dict(self) -> dict:
        return {"n_top": self.n_top, "class_of_meter": self.class_of_meter}

    @classmethod
    def from_dict(cls, d: dict) -> "MeterClassMap":
        return cls(class_of_meter=dict(d["class_of_meter"]), n_top=int(d["n_top"]))

    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def build_meter_classes(corpus: Corpus, n_top: int = DEFAULT_TOP_METERS) -> MeterClassMap:
    """Rank meters by poem count and keep the top ``n_top`` as named classes.

    Deterministic under poem reordering: ranking sorts by (count desc,
    meter asc).

    Raises:
        ValueError: if the corpus has no meters.
    """
    counts: dict[str, int] = {}
    for r in corpus.records:
        counts[r.meter] = counts.get(r.meter, 0) + 1
    if not counts:
        raise ValueError("cannot build meter classes: corpus has no meters")
    ranked = sorted(counts, key=lambda m: (-counts[m], m))
    mapping = {m: i for i, m in enumerate(ranked[:n_top])}
    return MeterClassMap(mapping, n_top)


def one_hot_form(form: str, form_index: dict[str, int]) -> np.ndarray:
    """One-hot over known forms plus a trailing unknown slot."""
    vec = np.zeros(len(form_index) + 1, dtype=np.float64)
    vec[form_index.get(form, len(form_index))] = 1.0
    return vec


def one_hot_meter(meter: str, meter_map: MeterClassMap) -> np.ndarray:
    vec = np.zeros(meter_map.n_classes, dtype=np.float64)
    vec[meter_map.class_of(meter)] = 1.0
    return vec
