"""Hand-crafted statistical meta-features.

A fixed-order vector of dataset statistics: size/shape counts, distribution
statistics of the class-probability vector and of the per-feature value
cardinalities, and majority/minority class sizes. All statistics are
order-agnostic in features and class ids, so the vector is invariant under
feature permutation and class relabeling by construction.

Moment conventions: population moments throughout; skewness and excess
kurtosis of a zero-variance sequence are defined as 0; quartiles use linear
interpolation between order statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset

_STAT_NAMES = ("Min", "Max", "Mean", "Stdev", "Skew", "Kurtosis", "Quartile1", "Quartile2", "Quartile3")

HANDCRAFTED_NAMES = (
    ("NumberOfInstances", "NumberOfFeatures", "NumberOfClasses", "Dimensionality")
    + tuple(f"{s}ClassProbability" for s in _STAT_NAMES)
    + tuple(f"{s}CardinalityOfNumericFeatures" for s in _STAT_NAMES)
    + ("MajorityClassSize", "MinorityClassSize")
)


@dataclass(frozen=True)
class HandcraftedVector:
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(HANDCRAFTED_NAMES),):
            raise ValueError("handcrafted vector has a fixed length")
        vals.setflags(write=False)

    @property
    def names(self):
        return HANDCRAFTED_NAMES

    def __getitem__(self, name):
        return float(self.values[HANDCRAFTED_NAMES.index(name)])

    def as_dict(self):
        return {name: float(v) for name, v in zip(HANDCRAFTED_NAMES, self.values)}


def _distribution_stats(x):
    """Min/Max/Mean/Stdev/Skew/Kurtosis/Q1/Q2/Q3 with population moments.

    The input is sorted first so the float result is identical for any
    ordering of the multiset (bit-exact invariance).
    """
    x = np.sort(np.asarray(x, dtype=np.float64))
    mean = x.mean()
    centered = x - mean
    m2 = (centered**2).mean()
    if m2 > 0:
        skew = (centered**3).mean() / m2**1.5
        kurt = (centered**4).mean() / m2**2 - 3.0
    else:
        skew = kurt = 0.0
    q1, q2, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return [x.min(), x.max(), mean, np.sqrt(m2), skew, kurt, q1, q2, q3]


def extract_handcrafted(z: LabeledDataset) -> HandcraftedVector:
    counts = z.class_counts().astype(np.float64)
    class_probs = counts / z.n
    cardinalities = np.array([np.unique(z.features[:, j]).size for j in range(z.dx)], dtype=np.float64)
    values = (
        [float(z.n), float(z.dx), float(z.n_classes), z.dx / z.n]
        + _distribution_stats(class_probs)
        + _distribution_stats(cardinalities)
        + [counts.max(), counts.min()]
    )
    return HandcraftedVector(np.asarray(values))
