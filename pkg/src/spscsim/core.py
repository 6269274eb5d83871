"""Replication lifecycle for discrete-time stochastic simulations.

A simulation model is a black box with three operations (initialize, step,
observe); everything else in the package manipulates replications: seeded,
independently evolving instances of the model that can be advanced in time
and deep-cloned at stage boundaries.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

__all__ = [
    "SimulationError",
    "RandomStream",
    "Replication",
    "SimulationModel",
    "new_replication",
    "advance",
    "deep_clone",
    "validate_observable",
]

_U64 = (1 << 64) - 1


class SimulationError(RuntimeError):
    """Raised when a model or the engine violates a runtime contract."""


class RandomStream:
    """A reproducible random stream identified by (master_seed, stream_id).

    Streams with the same identity always produce the same sequence; streams
    with distinct ids are derived through independent seed-sequence spawn
    keys and are statistically independent for practical purposes.
    """

    __slots__ = ("master_seed", "stream_id", "rng")

    def __init__(self, master_seed: int, stream_id: int, _rng: np.random.Generator | None = None):
        if stream_id < 0:
            raise ValueError(f"stream_id must be non-negative, got {stream_id}")
        self.master_seed = int(master_seed) & _U64
        self.stream_id = int(stream_id)
        if _rng is None:
            seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_id,))
            _rng = np.random.Generator(np.random.PCG64(seq))
        self.rng = _rng

    def copy(self) -> "RandomStream":
        """Duplicate the stream at its current position (same future draws)."""
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = self.rng.bit_generator.state
        return RandomStream(self.master_seed, self.stream_id, _rng=gen)

    def __getstate__(self):
        return (self.master_seed, self.stream_id, self.rng.bit_generator.state)

    def __setstate__(self, state):
        self.master_seed, self.stream_id, gen_state = state
        self.rng = np.random.Generator(np.random.PCG64())
        self.rng.bit_generator.state = gen_state

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


class SimulationModel(Protocol):
    """Black-box contract any simulated model must satisfy.

    ``step`` may depend only on the current state and the stream (Markov
    contract); ``observe`` must be pure. Implementations must be picklable
    so replications can be advanced in worker processes.
    """

    observable_names: tuple[str, ...]

    def initialize(self, stream: RandomStream) -> Any: ...

    def step(self, state: Any, stream: RandomStream) -> Any: ...

    def observe(self, state: Any) -> np.ndarray: ...


@dataclass
class Replication:
    """One independently seeded execution of a model.

    ``weight`` is the probability mass the replication carries; plain Monte
    Carlo leaves it at 1/N while the cloning policy reassigns it at every
    stage boundary.
    """

    state: Any
    time: int
    weight: float
    stream: RandomStream
    lineage_id: int

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must be in [0, 1], got {self.weight}")


def new_replication(
    model: SimulationModel,
    master_seed: int,
    stream_id: int,
    lineage_id: int,
    weight: float = 1.0,
) -> Replication:
    """Create and initialize a replication on a fresh stream."""
    stream = RandomStream(master_seed, stream_id)
    try:
        state = model.initialize(stream)
    except SimulationError:
        raise
    except Exception as exc:
        raise SimulationError(
            f"model initialization failed for replication {lineage_id}: {exc}"
        ) from exc
    return Replication(state=state, time=0, weight=weight, stream=stream, lineage_id=lineage_id)


def advance(replication: Replication, model: SimulationModel, steps: int) -> Replication:
    """Advance a replication by ``steps`` model steps (in place).

    The replication's weight is untouched; its stream state moves forward.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = replication.state
    for _ in range(int(steps)):
        try:
            state = model.step(state, replication.stream)
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(
                f"model step failed in replication {replication.lineage_id} "
                f"at time {replication.time}: {exc}"
            ) from exc
        replication.time += 1
        replication.state = state
    return replication


def deep_clone(
    replication: Replication,
    new_stream_id: int,
    new_weight: float,
    lineage_id: int | None = None,
) -> Replication:
    """Copy a replication with the given weight and its own random stream.

    A distinct ``new_stream_id`` derives a fresh, independent stream from
    (master_seed, new_stream_id). Passing the parent's own stream id instead
    duplicates the parent's stream at its current position, so parent and
    clone then follow identical trajectories: that is the continuation case
    used for the first clone of each delegate. The original is untouched.
    """
    if not 0.0 <= new_weight <= 1.0:
        raise ValueError(f"new_weight must be in [0, 1], got {new_weight}")
    if new_stream_id == replication.stream.stream_id:
        stream = replication.stream.copy()
    else:
        stream = RandomStream(replication.stream.master_seed, new_stream_id)
    return Replication(
        state=copy.deepcopy(replication.state),
        time=replication.time,
        weight=new_weight,
        stream=stream,
        lineage_id=replication.lineage_id if lineage_id is None else lineage_id,
    )


def validate_observable(values: Sequence[float] | np.ndarray, dimension: int | None = None) -> np.ndarray:
    """Check an observable vector (finite, 1-D, fixed dimension) and return it as float64."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise SimulationError(f"observable must be a non-empty 1-D vector, got shape {vec.shape}")
    if dimension is not None and vec.size != dimension:
        raise SimulationError(f"observable dimension {vec.size} != expected {dimension}")
    if not np.all(np.isfinite(vec)):
        raise SimulationError(f"observable contains non-finite values: {vec}")
    return vec
