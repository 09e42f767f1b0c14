"""Coverage-solution enumeration, attribute models, and weighted-product scoring.

A newly parked car (the decision maker) considers the active roadside units
it can hear, enumerates which of them to keep or revoke together with its
own candidacy, scores every alternative on four attributes, and picks the
best. Revocations are capped at two per decision, which keeps the candidate
set at 1 + n + n(n-1)/2 alternatives for n toggleable entities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy as np

from .grid import Cell
from .maps import CoverageMap, merge_local_maps

MAX_REVOCATIONS = 2


class UndefinedAttributeError(ValueError):
    """An attribute has no defined value for this pool (e.g. empty own map)."""


class ScoringError(ValueError):
    """Attributes produced a non-finite score."""


@dataclass(frozen=True)
class ScoringWeights:
    """Exponents of the weighted product; saturation acts as a cost.

    The score is signal^w_sig * saturation^(-w_sat) * coverage^w_cov *
    battery^w_bat, so raising the saturation weight penalizes redundant
    coverage instead of rewarding it.
    """

    signal: float = 1.0
    saturation: float = 0.2
    coverage: float = 0.3
    battery: float = 0.0

    def __post_init__(self):
        for name in ("signal", "saturation", "coverage", "battery"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"weight {name} must be finite and non-negative")


@dataclass(frozen=True)
class BatteryPolicy:
    """Grace period and hard cap on continuous roadside-unit duty.

    Up to standard_time_s of activity costs nothing; the indicator then
    decays linearly and hits zero at max_time_s, where the unit must stop.
    An infinite max_time_s disables both the decay and the forced stop.
    """

    standard_time_s: float = 1800.0
    max_time_s: float = 3600.0

    def __post_init__(self):
        if self.standard_time_s <= 0 or self.max_time_s <= self.standard_time_s:
            raise ValueError("battery policy requires 0 < standard_time_s < max_time_s")


def battery_indicator(active_time_s: float, policy: BatteryPolicy) -> float:
    """Remaining-duty indicator in [0, 1] for a unit active this long."""
    if active_time_s < policy.standard_time_s:
        return 1.0
    if math.isinf(policy.max_time_s):
        return 1.0
    frac = (active_time_s - policy.standard_time_s) / (policy.max_time_s - policy.standard_time_s)
    return max(0.0, 1.0 - frac)


class ActiveRsu(NamedTuple):
    entity_id: int
    coverage: CoverageMap
    battery: float


class SolutionAttributes(NamedTuple):
    signal: float
    saturation: float
    coverage: float
    battery: float


@dataclass(frozen=True)
class CandidatePool:
    """Decision input: the maker, its audible active units, and context maps.

    second_hop maps come from units the maker cannot command; they only
    shade the attribute computations and are never toggled.
    """

    maker_id: int
    maker_map: CoverageMap
    neighbors: tuple[ActiveRsu, ...] = ()
    second_hop: tuple[CoverageMap, ...] = ()

    def __post_init__(self):
        ids = [n.entity_id for n in self.neighbors]
        if self.maker_id in ids:
            raise ValueError("decision maker cannot appear among its neighbors")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate neighbor entity id")

    @property
    def toggleable_ids(self) -> tuple[int, ...]:
        return tuple(sorted([self.maker_id] + [n.entity_id for n in self.neighbors]))


@dataclass
class CoverageSolution:
    """One keep/revoke alternative: the entities left active, and the scores."""

    active: tuple[int, ...]
    revoked: tuple[int, ...]
    attrs: SolutionAttributes | None = None
    score: float | None = None

    @property
    def revoked_count(self) -> int:
        return len(self.revoked)


@dataclass(frozen=True)
class RoleCommand:
    verb: Literal["assign", "revoke"]
    target_id: int


class Decision(NamedTuple):
    chosen: CoverageSolution
    commands: tuple[RoleCommand, ...]


def enumerate_solutions(pool: CandidatePool) -> list[CoverageSolution]:
    """All alternatives revoking at most MAX_REVOCATIONS entities.

    Order is deterministic: no revocation first, then revoked sets of size
    one and two in lexicographic entity-id order.
    """
    ids = pool.toggleable_ids
    solutions = []
    for k in range(MAX_REVOCATIONS + 1):
        for revoked in itertools.combinations(ids, k):
            active = tuple(i for i in ids if i not in revoked)
            solutions.append(CoverageSolution(active=active, revoked=revoked))
    return solutions


def _active_maps(solution: CoverageSolution, pool: CandidatePool) -> list[CoverageMap]:
    active = set(solution.active)
    maps = []
    if pool.maker_id in active:
        maps.append(pool.maker_map)
    for n in pool.neighbors:
        if n.entity_id in active:
            maps.append(n.coverage)
    return maps


def attr_signal(solution: CoverageSolution, pool: CandidatePool) -> float:
    """Mean best strength over the maker's own cells, under this solution.

    The denominator is the maker's full covered-cell count, so losing
    service on an own cell drags the average down rather than shrinking it.
    Defined as the floor value 1.0 when no own cell keeps service.
    """
    own = pool.maker_map.cells
    if not own:
        raise UndefinedAttributeError("decision maker's coverage map is empty")
    merged = merge_local_maps(_active_maps(solution, pool) + list(pool.second_hop))
    total = 0
    seen = 0
    for cell in own:
        s = merged.best_signal.get(cell, 0)
        if s > 0:
            total += s
            seen += 1
    if seen == 0:
        return 1.0
    return total / len(own)


def attr_saturation(solution: CoverageSolution, pool: CandidatePool) -> float:
    """Mean contributor count over the maker's own cells, same denominator."""
    own = pool.maker_map.cells
    if not own:
        raise UndefinedAttributeError("decision maker's coverage map is empty")
    merged = merge_local_maps(_active_maps(solution, pool) + list(pool.second_hop))
    total = 0
    seen = 0
    for cell in own:
        c = merged.saturation.get(cell, 0)
        if c > 0:
            total += c
            seen += 1
    if seen == 0:
        return 1.0
    return total / len(own)


def attr_coverage(solution: CoverageSolution, pool: CandidatePool) -> float:
    """Covered share of every cell any pool map knows about.

    The universe is the union over the maker's map, all neighbor maps, and
    the second-hop context, so the all-active solution always scores 1.0.
    """
    universe: set[Cell] = set(pool.maker_map.cells)
    for n in pool.neighbors:
        universe.update(n.coverage.cells)
    for m in pool.second_hop:
        universe.update(m.cells)
    if not universe:
        raise UndefinedAttributeError("no cells known to any map in the pool")
    covered: set[Cell] = set()
    for m in _active_maps(solution, pool):
        covered.update(m.cells)
    for m in pool.second_hop:
        covered.update(m.cells)
    return len(covered) / len(universe)


def attr_battery(solution: CoverageSolution, pool: CandidatePool) -> float:
    """Mean battery indicator over the entities the solution keeps active.

    The maker itself counts as 1.0 (it has not served yet). An empty active
    set is neutral at 1.0.
    """
    values = []
    active = set(solution.active)
    if pool.maker_id in active:
        values.append(1.0)
    for n in pool.neighbors:
        if n.entity_id in active:
            values.append(n.battery)
    if not values:
        return 1.0
    return sum(values) / len(values)


def compute_attributes(solution: CoverageSolution, pool: CandidatePool) -> SolutionAttributes:
    return SolutionAttributes(
        signal=attr_signal(solution, pool),
        saturation=attr_saturation(solution, pool),
        coverage=attr_coverage(solution, pool),
        battery=attr_battery(solution, pool),
    )


def score(attrs: SolutionAttributes, weights: ScoringWeights) -> float:
    """Weighted product of the four attributes; saturation is a cost.

    A zero battery indicator under zero battery weight contributes the
    neutral factor 1.0 (x^0 is 1 even at x = 0).
    """
    for v in attrs:
        if not math.isfinite(v):
            raise ScoringError(f"non-finite attribute in {attrs}")
    try:
        value = (
            attrs.signal**weights.signal
            * attrs.saturation ** (-weights.saturation)
            * attrs.coverage**weights.coverage
            * attrs.battery**weights.battery
        )
    except OverflowError:
        raise ScoringError(f"score overflow for {attrs}") from None
    if not math.isfinite(value):
        raise ScoringError(f"score overflow for {attrs}")
    return value


def decide(pool: CandidatePool, weights: ScoringWeights) -> Decision:
    """Score every solution and emit the commands realizing the best one.

    Ties prefer more revocations, then the no-action solution, then the
    lexicographically lowest active set. Solutions whose attributes are
    undefined are skipped; if none can be scored the no-action solution is
    returned unscored and nothing changes.
    """
    solutions = enumerate_solutions(pool)
    _score_solutions(solutions, pool, weights)
    no_action_revoked = (pool.maker_id,)
    scored = [s for s in solutions if s.score is not None]
    if scored:
        chosen = min(
            scored,
            key=lambda s: (-s.score, -s.revoked_count, s.revoked != no_action_revoked, s.active),
        )
    else:
        chosen = next(s for s in solutions if s.revoked == no_action_revoked)
    active = set(chosen.active)
    commands = []
    if pool.maker_id in active:
        commands.append(RoleCommand("assign", pool.maker_id))
    for n in pool.neighbors:
        if n.entity_id not in active:
            commands.append(RoleCommand("revoke", n.entity_id))
    return Decision(chosen=chosen, commands=tuple(commands))


def _score_solutions(solutions: list[CoverageSolution], pool: CandidatePool, weights: ScoringWeights) -> None:
    """Fill attrs and score on each solution, vectorized over cells.

    Integer tallies keep the arithmetic bit-identical to the per-solution
    attribute functions: sums of small ints divided by one denominator.
    Pools whose attributes are undefined leave every solution unscored.
    """
    own_count = len(pool.maker_map.cells)
    if own_count == 0:
        return
    index: dict[Cell, int] = {}
    for m in [pool.maker_map] + [n.coverage for n in pool.neighbors] + list(pool.second_hop):
        for cell in m.cells:
            if cell not in index:
                index[cell] = len(index)
    n_cells = len(index)
    if n_cells == 0:
        return

    rows = [pool.maker_map] + [n.coverage for n in pool.neighbors]
    strengths = np.zeros((len(rows), n_cells), dtype=np.int16)
    for i, m in enumerate(rows):
        for cell, s in m.cells.items():
            strengths[i, index[cell]] = s
    hop2_best = np.zeros(n_cells, dtype=np.int16)
    hop2_count = np.zeros(n_cells, dtype=np.int32)
    for m in pool.second_hop:
        for cell, s in m.cells.items():
            j = index[cell]
            if s > hop2_best[j]:
                hop2_best[j] = s
            hop2_count[j] += 1
    own_mask = np.zeros(n_cells, dtype=bool)
    for cell in pool.maker_map.cells:
        own_mask[index[cell]] = True

    ids = [pool.maker_id] + [n.entity_id for n in pool.neighbors]
    row_of = {eid: i for i, eid in enumerate(ids)}
    batteries = {pool.maker_id: 1.0}
    for n in pool.neighbors:
        batteries[n.entity_id] = n.battery

    for sol in solutions:
        sel = [row_of[eid] for eid in sol.active]
        if sel:
            active_rows = strengths[sel]
            best = np.maximum(active_rows.max(axis=0), hop2_best)
            count = (active_rows > 0).sum(axis=0) + hop2_count
        else:
            best = hop2_best
            count = hop2_count
        covered = count > 0
        restricted = covered & own_mask
        if restricted.any():
            a_sig = int(best[restricted].sum()) / own_count
            a_sat = int(count[restricted].sum()) / own_count
        else:
            a_sig = 1.0
            a_sat = 1.0
        a_cov = int(covered.sum()) / n_cells
        kept = [batteries[eid] for eid in sol.active]
        a_bat = sum(kept) / len(kept) if kept else 1.0
        sol.attrs = SolutionAttributes(a_sig, a_sat, a_cov, a_bat)
        sol.score = score(sol.attrs, weights)
