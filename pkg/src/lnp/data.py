"""Synthetic two-sample scenario generators, the iris petal-width fixture,
and CSV ingestion.

Scenario mixtures (N(mean, variance) notation):

- I:           both samples   0.5 N(0,1)   + 0.5 N(5,1)
- II:          sample 1       0.9 N(5,0.6) + 0.1 N(10,0.6)
               sample 2       0.1 N(5,0.6) + 0.9 N(0,0.6)
- III:         sample 1       0.8 N(5,1)   + 0.2 N(0,1)
               sample 2       0.2 N(5,1)   + 0.8 N(0,1)
- motivating:  sample 1       0.5 N(5,0.6) + 0.5 N(10,0.6)
               sample 2       0.5 N(5,0.6) + 0.5 N(0,0.6)

The iris fixture uses petal widths in millimetres (10x the canonical cm
encoding, matching a working range of [0, 30]); sample 1 holds the 50
setosa plus the first 40 versicolor observations in dataset order, sample 2
the remaining 10 versicolor plus the 50 virginica.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, ParseError, ValidationError

__all__ = [
    "TwoSampleData",
    "SCENARIOS",
    "generate_scenario",
    "iris_petal_width",
    "load_csv",
    "save_csv",
]


@dataclass(frozen=True)
class TwoSampleData:
    sample1: np.ndarray
    sample2: np.ndarray
    provenance: str = "file"
    seed: Optional[int] = None

    def __post_init__(self):
        s1 = np.asarray(self.sample1, dtype=float)
        s2 = np.asarray(self.sample2, dtype=float)
        object.__setattr__(self, "sample1", s1)
        object.__setattr__(self, "sample2", s2)
        if s1.size == 0 or s2.size == 0:
            raise ValidationError("both samples must be nonempty")
        if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
            raise ValidationError("samples must contain only finite values")


# (weight, mean, variance) per component, per sample
SCENARIOS = {
    "I": (
        ((0.5, 0.0, 1.0), (0.5, 5.0, 1.0)),
        ((0.5, 0.0, 1.0), (0.5, 5.0, 1.0)),
    ),
    "II": (
        ((0.9, 5.0, 0.6), (0.1, 10.0, 0.6)),
        ((0.1, 5.0, 0.6), (0.9, 0.0, 0.6)),
    ),
    "III": (
        ((0.8, 5.0, 1.0), (0.2, 0.0, 1.0)),
        ((0.2, 5.0, 1.0), (0.8, 0.0, 1.0)),
    ),
    "motivating": (
        ((0.5, 5.0, 0.6), (0.5, 10.0, 0.6)),
        ((0.5, 5.0, 0.6), (0.5, 0.0, 0.6)),
    ),
}


def _draw_mixture(components, n, rng):
    weights = np.array([w for w, _, _ in components])
    means = np.array([m for _, m, _ in components])
    sds = np.sqrt([v for _, _, v in components])
    which = rng.choice(len(components), size=n, p=weights / weights.sum())
    return rng.normal(means[which], sds[which])


def generate_scenario(which, n1, n2, seed=0):
    """Draw the two samples of the named scenario, seed-deterministically,
    with independent sub-streams per sample."""
    if which not in SCENARIOS:
        raise DomainError(
            f"unknown scenario {which!r}; choose from {sorted(SCENARIOS)}"
        )
    if n1 < 1 or n2 < 1:
        raise DomainError("sample sizes must be >= 1")
    comp1, comp2 = SCENARIOS[which]
    seq1, seq2 = np.random.SeedSequence(seed).spawn(2)
    sample1 = _draw_mixture(comp1, n1, np.random.default_rng(seq1))
    sample2 = _draw_mixture(comp2, n2, np.random.default_rng(seq2))
    return TwoSampleData(sample1, sample2, provenance=f"scenario_{which}", seed=seed)


# canonical iris petal widths (mm), dataset order within species
_IRIS_SETOSA_MM = (
    2, 2, 2, 2, 2, 4, 3, 2, 2, 1, 2, 2, 1, 1, 2, 4, 4, 3, 3, 3, 2, 4, 2, 5, 2,
    2, 4, 2, 2, 2, 2, 4, 1, 2, 2, 2, 2, 1, 2, 2, 3, 3, 2, 6, 4, 3, 2, 2, 2, 2,
)
_IRIS_VERSICOLOR_MM = (
    14, 15, 15, 13, 15, 13, 16, 10, 13, 14, 10, 15, 10, 14, 13, 14, 15, 10,
    15, 11, 18, 13, 15, 12, 13, 14, 14, 17, 15, 10, 11, 10, 12, 16, 15, 16,
    15, 13, 13, 13, 12, 14, 12, 10, 13, 12, 13, 13, 11, 13,
)
_IRIS_VIRGINICA_MM = (
    25, 19, 21, 18, 22, 21, 17, 18, 18, 25, 20, 19, 21, 20, 24, 23, 18, 22,
    23, 15, 23, 20, 20, 18, 21, 18, 18, 18, 21, 16, 19, 20, 22, 15, 14, 23,
    24, 18, 18, 21, 24, 23, 19, 23, 25, 23, 19, 20, 23, 18,
)


def iris_petal_width():
    """Petal widths in millimetres: sample 1 = 50 setosa + first 40
    versicolor, sample 2 = last 10 versicolor + 50 virginica."""
    sample1 = np.array(_IRIS_SETOSA_MM + _IRIS_VERSICOLOR_MM[:40], dtype=float)
    sample2 = np.array(_IRIS_VERSICOLOR_MM[40:] + _IRIS_VIRGINICA_MM, dtype=float)
    return TwoSampleData(sample1, sample2, provenance="iris")


def save_csv(data, path, header_comment=None):
    """Write the value,sample schema; deterministic formatting."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("value,sample\n")
        for value in data.sample1:
            fh.write(f"{float(value)!r},1\n")
        for value in data.sample2:
            fh.write(f"{float(value)!r},2\n")


def load_csv(path):
    """Read the value,sample schema; comment lines (#) are ignored."""
    sample1, sample2 = [], []
    with open(path) as fh:
        lines = list(fh)
    rows = [
        (i + 1, line.strip())
        for i, line in enumerate(lines)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not rows:
        raise ParseError("empty data file")
    header_line, header = rows[0]
    if [c.strip().lower() for c in header.split(",")] != ["value", "sample"]:
        raise ParseError(f"expected header 'value,sample', got {header!r}", line=header_line)
    for lineno, row in rows[1:]:
        cells = row.split(",")
        if len(cells) != 2:
            raise ParseError("expected two fields 'value,sample'", line=lineno)
        try:
            value = float(cells[0])
        except ValueError:
            raise ParseError(f"non-numeric value {cells[0]!r}", line=lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {cells[0]!r}", line=lineno)
        group = cells[1].strip()
        if group == "1":
            sample1.append(value)
        elif group == "2":
            sample2.append(value)
        else:
            raise ParseError(f"sample id must be 1 or 2, got {group!r}", line=lineno)
    if not sample1 or not sample2:
        missing = "1" if not sample1 else "2"
        raise ValidationError(f"data file has no rows for sample {missing}")
    return TwoSampleData(np.array(sample1), np.array(sample2), provenance="file")
