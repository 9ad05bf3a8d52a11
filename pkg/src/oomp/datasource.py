"""Coordinate-query data access with exact cost accounting.

A :class:`DataSource` wraps a model and a generator and serves feature-set
restricted rows.  Index ``d`` (one past the last feature) denotes the
response ``y``; a query for feature set ``F`` costs ``|F|`` units.

Two modes:

* ``stream``   -- every query draws a fresh row; past rows are gone.
* ``database`` -- fresh rows are retained and can be re-read coordinatewise
  via :meth:`DataSource.query_old`, but only back to the isolation barrier
  set by the most recent :meth:`DataSource.begin_subroutine` call.  ``i = 0``
  addresses the newest row, ``i = 1`` the one before it, and so on.

All randomness flows through the generator handed to the source, one row at
a time (``d + 1`` uniforms per row), so a fixed seed and a fixed query script
reproduce identical values; batched draws consume the stream exactly like the
equivalent sequence of single draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ModelSpec, _draw_rows, sample_batch

__all__ = [
    "BudgetExceeded",
    "DataSource",
    "FeatureSet",
    "QueryLedger",
    "SubroutineCost",
]

MODES = ("stream", "database")


class BudgetExceeded(RuntimeError):
    """Raised by a capped source when the next query would overrun the cap."""


@dataclass(frozen=True)
class FeatureSet:
    """Sorted, unique, nonempty tuple of column indices (response included as d)."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("feature set must be nonempty")
        if any(i < 0 for i in idx):
            raise ValueError("feature indices must be nonnegative")
        if len(set(idx)) != len(idx):
            raise ValueError("feature indices must be unique")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class SubroutineCost:
    new_calls: int = 0
    old_calls: int = 0
    cost: int = 0


@dataclass
class QueryLedger:
    """Running totals of query counts and cost, split by subroutine label."""

    new_calls: int = 0
    old_calls: int = 0
    cost: int = 0
    per_subroutine: dict[str, SubroutineCost] = field(default_factory=dict)

    def charge(self, label: str, *, new: int = 0, old: int = 0, cost: int = 0) -> None:
        self.new_calls += new
        self.old_calls += old
        self.cost += cost
        bucket = self.per_subroutine.setdefault(label, SubroutineCost())
        bucket.new_calls += new
        bucket.old_calls += old
        bucket.cost += cost

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {
            label: {"new_calls": b.new_calls, "old_calls": b.old_calls, "cost": b.cost}
            for label, b in self.per_subroutine.items()
        }

    def snapshot(self) -> tuple[int, int, int]:
        return self.new_calls, self.old_calls, self.cost


class DataSource:
    """Query-counted access to rows of a synthetic model."""

    def __init__(
        self,
        spec: ModelSpec,
        mode: str,
        rng: np.random.Generator,
        cost_cap: float | None = None,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.spec = spec
        self.mode = mode
        self.ledger = QueryLedger()
        self.cost_cap = cost_cap
        self._rng = rng
        self._label = "main"
        self._rows: list[np.ndarray] = []  # database mode: rows since the barrier
        self._d = spec.d
        # per-FeatureSet draw plans keyed by object id; the stored reference
        # keeps the object alive so ids cannot be recycled
        self._plans: dict[int, tuple[FeatureSet, np.ndarray, bool, tuple[int, ...]]] = {}

    @property
    def response_index(self) -> int:
        return self._d

    @property
    def rows_since_barrier(self) -> int:
        return len(self._rows)

    def begin_subroutine(self, label: str) -> int:
        """Advance the isolation barrier and attribute subsequent cost to ``label``.

        Calls are flat: each call moves the barrier to the current position,
        discarding replay access to anything drawn before it.
        """
        self._label = str(label)
        self._rows.clear()
        return 0

    def _plan(
        self, features: FeatureSet | Iterable[int]
    ) -> tuple[np.ndarray, bool, tuple[int, ...]]:
        """(index array, response requested, feature-only coords) for a query."""
        if isinstance(features, FeatureSet):
            cached = self._plans.get(id(features))
            if cached is not None:
                return cached[1], cached[2], cached[3]
        else:
            features = FeatureSet(tuple(features))
        idx = np.asarray(features.indices, dtype=np.intp)
        if idx[-1] > self._d:
            raise ValueError(
                f"feature index {int(idx[-1])} out of range (response index is {self._d})"
            )
        wants_y = bool(idx[-1] == self._d)
        coords = features.indices[:-1] if wants_y else features.indices
        self._plans[id(features)] = (features, idx, wants_y, coords)
        return idx, wants_y, coords

    def _check_cap(self, cost: int) -> None:
        if self.cost_cap is not None and self.ledger.cost + cost > self.cost_cap:
            raise BudgetExceeded(
                f"query of cost {cost} would exceed cap {self.cost_cap} "
                f"(spent {self.ledger.cost})"
            )

    def query_new(self, features: FeatureSet | Iterable[int]) -> np.ndarray:
        """Draw a fresh row and return its restriction to ``features``."""
        return self.query_new_batch(features, 1)[0]

    def query_new_batch(self, features: FeatureSet | Iterable[int], count: int) -> np.ndarray:
        """Draw ``count`` fresh rows at once; accounting and values match
        ``count`` single :meth:`query_new` calls exactly."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        idx, wants_y, coords = self._plan(features)
        if count == 0:
            return np.empty((0, idx.size))
        self._check_cap(count * idx.size)
        if self.mode == "database":
            # Replay needs whole rows, so a database source materializes them.
            x, y = sample_batch(self.spec, self._rng, count)
            rows = np.empty((count, self._d + 1))
            rows[:, : self._d] = x
            rows[:, self._d] = y
            self._rows.extend(rows)
            out = rows if idx.size == self._d + 1 else rows[:, idx]
        else:
            x, y = _draw_rows(self.spec, self._rng, count, coords)
            if wants_y:
                out = np.empty((count, idx.size))
                out[:, :-1] = x
                out[:, -1] = y
            else:
                out = x
        self.ledger.charge(self._label, new=count, cost=int(count * idx.size))
        return out

    def query_old(self, i: int, features: FeatureSet | Iterable[int]) -> np.ndarray:
        """Re-read the row ``i`` positions back from the newest one (0 = newest).

        Only available in database mode and only back to the current barrier.
        """
        if self.mode != "database":
            raise ValueError("query_old is not available on a stream source")
        i = int(i)
        if not 0 <= i < len(self._rows):
            raise ValueError(
                f"query_old index {i} outside the barrier-bounded range "
                f"[0, {len(self._rows)})"
            )
        idx, _, _ = self._plan(features)
        self._check_cap(idx.size)
        self.ledger.charge(self._label, old=1, cost=int(idx.size))
        return self._rows[len(self._rows) - 1 - i][idx]
