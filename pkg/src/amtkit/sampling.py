"""Multi-dataset sampling weights: temperature scaling and rebalancing.

Temperature-scaled weights follow w(l) ~ (n(l) / n_total)^(1/c): c = 1
reproduces size-proportional sampling and large c approaches uniform.
Rebalancing moves a fraction of an overfitting dataset's weight onto the
others, preserving the total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DatasetWeights:
    """Normalized per-dataset sampling weights."""

    entries: dict[str, float]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("no datasets")
        for name, weight in self.entries.items():
            if weight < 0:
                raise ValueError(f"negative weight for {name}")
        total = sum(self.entries.values())
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise ValueError(f"weights sum to {total}, not 1")

    def __getitem__(self, name: str) -> float:
        return self.entries[name]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def values(self):
        return self.entries.values()

    def items(self):
        return self.entries.items()

    def names(self) -> list[str]:
        return sorted(self.entries)

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


def temperature_weights(
    sizes: dict[str, float], temperature: float
) -> DatasetWeights:
    """Temperature-scaled weights from per-dataset sizes."""
    if not sizes:
        raise ValueError("no datasets")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    for name, size in sizes.items():
        if size <= 0:
            raise ValueError(f"size for {name} must be positive")
    total = sum(sizes.values())
    raw = {name: (size / total) ** (1.0 / temperature) for name, size in sizes.items()}
    norm = sum(raw.values())
    return DatasetWeights({name: value / norm for name, value in raw.items()})


def rebalance_step(
    weights: DatasetWeights | dict[str, float],
    overfitting: str | list[str],
    fraction: float = 0.10,
) -> DatasetWeights:
    """Moves ``fraction`` of each overfitting dataset's weight onto the rest.

    The removed mass is redistributed across the non-overfitting datasets
    in proportion to their current weights, so the total stays 1 and no
    weight goes negative.
    """
    if isinstance(weights, dict):
        weights = DatasetWeights(dict(weights))
    names = [overfitting] if isinstance(overfitting, str) else list(overfitting)
    for name in names:
        if name not in weights.entries:
            raise KeyError(f"unknown dataset {name!r}")
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    over = set(names)
    rest = [name for name in weights.entries if name not in over]
    if not rest:
        raise ValueError("cannot rebalance: every dataset marked overfitting")
    removed = sum(weights.entries[name] * fraction for name in over)
    rest_total = sum(weights.entries[name] for name in rest)
    out: dict[str, float] = {}
    for name, weight in weights.entries.items():
        if name in over:
            out[name] = weight * (1.0 - fraction)
        elif rest_total > 0:
            out[name] = weight + removed * (weight / rest_total)
        else:
            # Degenerate case: all mass on the overfitting datasets.
            out[name] = removed / len(rest)
    return DatasetWeights(out)


# Hand-tuned final weights after rebalancing a ten-dataset training mix.
REBALANCED_WEIGHTS = {
    "Slakh": 0.295,
    "MusicNet(em)": 0.19,
    "MIR-ST500": 0.191,
    "ENSTdrums": 0.05,
    "GuitarSet": 0.01,
    "EGMD": 0.004,
    "URMP": 0.1,
    "Maestro": 0.1,
    "SMT Bass": 0.01,
    "CMedia": 0.05,
}


def default_rebalanced_weights() -> DatasetWeights:
    """Returns the preset ten-dataset weights (summing to exactly 1.000)."""
    return DatasetWeights(dict(REBALANCED_WEIGHTS))


class WeightedSampler:
    """Seeded categorical sampler over dataset names."""

    def __init__(self, weights: DatasetWeights, seed: int):
        self._names = weights.names()
        self._probs = np.array([weights[name] for name in self._names], dtype=np.float64)
        self._probs = self._probs / self._probs.sum()
        self._rng = np.random.default_rng(seed)

    def draw(self, count: int = 1) -> list[str]:
        if count < 1:
            raise ValueError("count must be >= 1")
        picks = self._rng.choice(len(self._names), size=count, p=self._probs)
        return [self._names[i] for i in picks]
