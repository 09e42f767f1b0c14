"""Discrete-time city simulation: traffic, learning, decisions, metrics.

One tick is one second. Moving vehicles beacon every tick; every freshly
parked car listens for a learning period, builds its coverage map, then
runs one keep/revoke decision over the active roadside units it can hear.
The loop applies at most one decision per tick, atomically, and samples
network metrics every tick.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import (
    RunConfig,
    build_grid,
    build_parking_model,
    build_policy,
    build_propagation,
    build_weights,
)
from .decision import (
    ActiveRsu,
    CandidatePool,
    RoleCommand,
    battery_indicator,
    decide,
)
from .errors import ConfigurationError
from .grid import Cell
from .maps import CoverageMap, CoverageMapBuilder
from .radio import FootprintCache, sample_rssi_many
from .traffic import Role, TrafficProcess, Vehicle, should_depart

CAUSE_DECISION = "decision"
CAUSE_FORCED = "forced_tau_M"
CAUSE_DEPARTURE = "departure"

KIND_CAM = "cam"
KIND_MAP_REQUEST = "map_request"
KIND_MAP_RESPONSE = "map_response"
KIND_ROLE_ASSIGN = "role_assign"
KIND_ROLE_REVOKE = "role_revoke"

METRICS_HEADER = "t,active_rsus,coverage_pct,mean_signal,mean_saturation,area_per_rsu"
LIFETIMES_HEADER = "entity_id,assigned_at,revoked_at,cause"
COMMANDS_HEADER = "time_s,maker_id,verb,target_id"
BOUNDS_HEADER = "mean_signal,mean_saturation"


@dataclass(frozen=True)
class Message:
    """Unit of in-network communication; delivery requires radio contact.

    Dense beacon traffic (cam) is tallied rather than materialized; map and
    role traffic flows through _deliver so no entity ever reads another's
    state except out of a delivered payload.
    """

    kind: str
    sender: int
    recipient: int | None
    payload: object = None


@dataclass
class MetricsSample:
    t: float
    active_rsus: int
    coverage_pct: float
    mean_signal: float
    mean_saturation: float
    area_per_rsu_m2: float


@dataclass
class RsuLifetimeRecord:
    entity_id: int
    assigned_at: float
    revoked_at: float
    cause: str


@dataclass
class CommandRecord:
    time_s: float
    maker_id: int
    verb: str
    target_id: int


@dataclass
class RunResult:
    metrics: list[MetricsSample]
    lifetimes: list[RsuLifetimeRecord]
    commands: list[CommandRecord]
    message_counts: dict[str, int]
    parking_events: int
    assignments: int
    decisions: int
    active_at_end: int


@dataclass
class StatPair:
    mean: float
    sd: float


@dataclass
class SteadyStateSummary:
    n_samples: int
    active_rsus: StatPair
    coverage_pct: StatPair
    mean_signal: StatPair
    mean_saturation: StatPair
    area_per_rsu_m2: StatPair


@dataclass
class BoundsResult:
    samples: list[tuple[float, float]]
    skipped: int
    fill_cells: list[Cell]


class Simulation:
    """Owns all mutable run state; build once, run once."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.grid = build_grid(config)
        self.prop = build_propagation(config)
        self.weights = build_weights(config)
        self.policy = build_policy(config)
        self.model = build_parking_model(config)
        seed = config.sim.seed
        self._rng_traffic = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        self._rng_beacons = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.traffic = TrafficProcess(
            self.model, self.grid, self._rng_traffic, speed_mps=config.traffic.speed_mps
        )
        self._footprints = FootprintCache(self.grid, self.prop)
        self._cell_index = {c: i for i, c in enumerate(self.grid.usable_cells)}
        self._counts = np.zeros((len(self._cell_index), 6), dtype=np.int32)
        self._fp_arrays_cache: dict[Cell, tuple[np.ndarray, np.ndarray]] = {}
        self._cell_area = self.grid.cell_size_m**2

        self._vehicles: dict[int, Vehicle] = {}
        self._moving: dict[int, Vehicle] = {}
        self._learning: dict[int, Vehicle] = {}
        self._active: dict[int, Vehicle] = {}
        self._builders: dict[int, CoverageMapBuilder] = {}
        self._learned: dict[int, CoverageMap] = {}
        self._pending: list[int] = []
        self._pending_head = 0
        self._departures: list[tuple[float, int]] = []
        self._forced: list[tuple[float, int]] = []

        self.metrics: list[MetricsSample] = []
        self.lifetimes: list[RsuLifetimeRecord] = []
        self.commands: list[CommandRecord] = []
        self.message_counts = {
            KIND_CAM: 0,
            KIND_MAP_REQUEST: 0,
            KIND_MAP_RESPONSE: 0,
            KIND_ROLE_ASSIGN: 0,
            KIND_ROLE_REVOKE: 0,
        }
        self.parking_events = 0
        self.assignments = 0
        self.decisions = 0

    def run(self) -> RunResult:
        duration = int(round(self.config.sim.duration_s))
        for t_i in range(duration):
            self._tick(float(t_i))
        return RunResult(
            metrics=self.metrics,
            lifetimes=self.lifetimes,
            commands=self.commands,
            message_counts=dict(self.message_counts),
            parking_events=self.parking_events,
            assignments=self.assignments,
            decisions=self.decisions,
            active_at_end=len(self._active),
        )

    # tick phases

    def _tick(self, t: float) -> None:
        self._phase_traffic(t)
        self._phase_beacons(t)
        self._phase_forced_revocations(t)
        self._phase_decision(t)
        self._phase_metrics(t)

    def _phase_traffic(self, t: float) -> None:
        for v in self.traffic.spawn(t):
            self._vehicles[v.vid] = v
            self._moving[v.vid] = v
        for v in self._moving.values():
            self.traffic.step(v)
        parked_now = []
        for v in self._moving.values():
            if self.traffic.maybe_park(v, t):
                parked_now.append(v)
        for v in parked_now:
            del self._moving[v.vid]
            self.parking_events += 1
            self._learning[v.vid] = v
            self._builders[v.vid] = CoverageMapBuilder(v.vid)
            heapq.heappush(self._departures, (v.parked_at + v.planned_duration_s, v.vid))
        while self._departures and self._departures[0][0] <= t:
            _, vid = heapq.heappop(self._departures)
            v = self._vehicles.get(vid)
            if v is None or not should_depart(v, t):
                continue
            if v.role is Role.PARKED_RSU:
                self._revoke(vid, t, CAUSE_DEPARTURE)
            self._vehicles.pop(vid, None)
            self._learning.pop(vid, None)
            self._builders.pop(vid, None)
            self._learned.pop(vid, None)

    def _phase_beacons(self, t: float) -> None:
        movers = self._moving
        self.message_counts[KIND_CAM] += len(movers)
        if not movers:
            self._promote_learners(t)
            return
        mover_cells = [v.cell for v in movers.values()]
        learn_s = self.config.decision.learning_period_s
        noise_sd = self.config.radio.noise_sd
        for vid, learner in self._learning.items():
            if t - learner.parked_at >= learn_s:
                continue
            fp = self._footprints.footprint(learner.cell)
            heard = [(c, fp[c]) for c in mover_cells if c in fp]
            if not heard:
                continue
            classes = np.fromiter((s for _, s in heard), dtype=np.int64, count=len(heard))
            rssis = sample_rssi_many(classes, noise_sd, self._rng_beacons)
            builder = self._builders[vid]
            for (cell, _), rssi in zip(heard, rssis):
                builder.record(cell, int(rssi))
        self._promote_learners(t)

    def _promote_learners(self, t: float) -> None:
        learn_s = self.config.decision.learning_period_s
        done = [vid for vid, v in self._learning.items() if t - v.parked_at >= learn_s]
        for vid in done:
            v = self._learning.pop(vid)
            builder = self._builders.pop(vid)
            learned = builder.finalize_coverage(self.config.maps.min_samples)
            cells = dict(learned.cells)
            cells[v.cell] = 5
            self._learned[vid] = CoverageMap(vid, cells)
            self._pending.append(vid)

    def _phase_forced_revocations(self, t: float) -> None:
        while self._forced and self._forced[0][0] <= t:
            _, vid = heapq.heappop(self._forced)
            v = self._active.get(vid)
            if v is None or v.rsu_active_since is None:
                continue
            if t - v.rsu_active_since >= self.policy.max_time_s:
                self._revoke(vid, t, CAUSE_FORCED)

    def _phase_decision(self, t: float) -> None:
        while self._pending_head < len(self._pending):
            vid = self._pending[self._pending_head]
            self._pending_head += 1
            maker = self._vehicles.get(vid)
            if maker is None or maker.role is not Role.PARKED_SILENT:
                continue
            if self.config.sim.always_grow:
                self._apply_commands(t, vid, (RoleCommand("assign", vid),), one_hop=set())
            else:
                pool = self._gather_pool(maker, t)
                decision = decide(pool, self.weights)
                one_hop = {n.entity_id for n in pool.neighbors}
                self._apply_commands(t, vid, decision.commands, one_hop)
            self.decisions += 1
            if self._pending_head > 1024:
                del self._pending[: self._pending_head]
                self._pending_head = 0
            return

    def _phase_metrics(self, t: float) -> None:
        sample = self._compute_metrics(t)
        self.metrics.append(sample)
        if int(t) % 100 == 0:
            self._verify_ledger(sample, t)

    # decision support

    def _deliver(self, msg: Message, sender_cell: Cell, recipient_cell: Cell) -> Message | None:
        if self._footprints.footprint(sender_cell).get(recipient_cell, 0) < 1:
            return None
        self.message_counts[msg.kind] += 1
        return msg

    def _gather_pool(self, maker: Vehicle, t: float) -> CandidatePool:
        fp = self._footprints.footprint(maker.cell)
        one_hop = [vid for vid, v in self._active.items() if v.cell in fp]
        one_hop.sort()
        neighbors = []
        second: dict[int, CoverageMap] = {}
        excluded = set(one_hop)
        excluded.add(maker.vid)
        for nid in one_hop:
            nveh = self._active[nid]
            request = self._deliver(
                Message(KIND_MAP_REQUEST, maker.vid, nid), maker.cell, nveh.cell
            )
            if request is None:
                continue
            nfp = self._footprints.footprint(nveh.cell)
            forwarded = [
                (mid, self._learned[mid])
                for mid, mveh in self._active.items()
                if mid != nid and mveh.cell in nfp
            ]
            battery = battery_indicator(t - nveh.rsu_active_since, self.policy)
            response = self._deliver(
                Message(
                    KIND_MAP_RESPONSE,
                    nid,
                    maker.vid,
                    (self._learned[nid], battery, forwarded),
                ),
                nveh.cell,
                maker.cell,
            )
            if response is None:
                continue
            own_map, battery, forwarded = response.payload
            neighbors.append(ActiveRsu(nid, own_map, battery))
            for mid, mmap in forwarded:
                if mid not in excluded:
                    second.setdefault(mid, mmap)
        second_maps = tuple(second[mid] for mid in sorted(second))
        return CandidatePool(
            maker_id=maker.vid,
            maker_map=self._learned[maker.vid],
            neighbors=tuple(neighbors),
            second_hop=second_maps,
        )

    def _apply_commands(
        self, t: float, maker_id: int, commands: Sequence[RoleCommand], one_hop: set[int]
    ) -> None:
        for cmd in commands:
            if cmd.verb == "assign":
                if cmd.target_id != maker_id:
                    raise RuntimeError("decision tried to assign an entity other than the maker")
                self._activate(cmd.target_id, t)
                self.message_counts[KIND_ROLE_ASSIGN] += 1
            else:
                if cmd.target_id not in one_hop:
                    raise RuntimeError("decision tried to revoke outside its one-hop neighbors")
                self._revoke(cmd.target_id, t, CAUSE_DECISION)
                self.message_counts[KIND_ROLE_REVOKE] += 1
            self.commands.append(CommandRecord(t, maker_id, cmd.verb, cmd.target_id))

    # role bookkeeping

    def _fp_arrays(self, cell: Cell) -> tuple[np.ndarray, np.ndarray]:
        cached = self._fp_arrays_cache.get(cell)
        if cached is None:
            fp = self._footprints.footprint(cell)
            idx = np.fromiter((self._cell_index[c] for c in fp), dtype=np.int64, count=len(fp))
            cls = np.fromiter(fp.values(), dtype=np.int64, count=len(fp))
            cached = (idx, cls)
            self._fp_arrays_cache[cell] = cached
        return cached

    def _activate(self, vid: int, t: float) -> None:
        v = self._vehicles[vid]
        v.role = Role.PARKED_RSU
        v.rsu_active_since = t
        self._active[vid] = v
        idx, cls = self._fp_arrays(v.cell)
        self._counts[idx, cls] += 1
        if not math.isinf(self.policy.max_time_s):
            heapq.heappush(self._forced, (t + self.policy.max_time_s, vid))
        self.assignments += 1

    def _revoke(self, vid: int, t: float, cause: str) -> None:
        v = self._active.pop(vid)
        self.lifetimes.append(RsuLifetimeRecord(vid, v.rsu_active_since, t, cause))
        v.role = Role.PARKED_SILENT
        v.rsu_active_since = None
        idx, cls = self._fp_arrays(v.cell)
        self._counts[idx, cls] -= 1

    # metrics

    def _compute_metrics(self, t: float) -> MetricsSample:
        contrib = self._counts[:, 1:]
        sat = contrib.sum(axis=1)
        covered = sat > 0
        n_cov = int(covered.sum())
        n_usable = len(self._cell_index)
        n_active = len(self._active)
        if n_cov:
            best = ((contrib > 0) * np.arange(1, 6)).max(axis=1)
            mean_signal = float(best.sum() / n_cov)
            mean_sat = float(sat.sum() / n_cov)
        else:
            mean_signal = 0.0
            mean_sat = 0.0
        area = n_cov * self._cell_area / n_active if n_active else 0.0
        return MetricsSample(
            t=t,
            active_rsus=n_active,
            coverage_pct=n_cov / n_usable,
            mean_signal=mean_signal,
            mean_saturation=mean_sat,
            area_per_rsu_m2=area,
        )

    def _verify_ledger(self, sample: MetricsSample, t: float) -> None:
        """Recompute the coverage tallies from scratch; they must match exactly."""
        scratch = np.zeros_like(self._counts)
        for v in self._active.values():
            idx, cls = self._fp_arrays(v.cell)
            scratch[idx, cls] += 1
        if not np.array_equal(scratch, self._counts):
            raise RuntimeError(f"coverage ledger out of sync at t={t}")
        again = self._compute_metrics(t)
        if again != sample:
            raise RuntimeError(f"metrics recomputation mismatch at t={t}")


def run(config: RunConfig) -> RunResult:
    """Build a simulation from the config and run it to completion."""
    return Simulation(config).run()


def steady_state_stats(metrics: Sequence[MetricsSample], discard_s: float) -> SteadyStateSummary:
    """Mean and standard deviation per metric after dropping the transient."""
    kept = [m for m in metrics if m.t >= discard_s]
    if not kept:
        raise ValueError(f"no metrics samples at or after discard_s={discard_s}")

    def pair(values: list[float]) -> StatPair:
        arr = np.asarray(values, dtype=float)
        lo, hi = float(arr.min()), float(arr.max())
        if lo == hi:
            # A constant series has sd exactly 0; don't let summation
            # round-off report a phantom spread.
            return StatPair(mean=lo, sd=0.0)
        return StatPair(mean=float(arr.mean()), sd=float(arr.std()))

    return SteadyStateSummary(
        n_samples=len(kept),
        active_rsus=pair([m.active_rsus for m in kept]),
        coverage_pct=pair([m.coverage_pct for m in kept]),
        mean_signal=pair([m.mean_signal for m in kept]),
        mean_saturation=pair([m.mean_saturation for m in kept]),
        area_per_rsu_m2=pair([m.area_per_rsu_m2 for m in kept]),
    )


def _warmed_up_parked_cells(config: RunConfig, rng: np.random.Generator) -> list[Cell]:
    """Cells of the cars the config's own parking process leaves parked.

    Runs traffic alone (no radio, no decisions) for the config's discard
    window so the snapshot reflects where vehicles actually park — including
    the extra weight busy cells such as intersections receive.
    """
    grid = build_grid(config)
    model = build_parking_model(config)
    traffic = TrafficProcess(model, grid, rng, speed_mps=config.traffic.speed_mps)
    moving: list[Vehicle] = []
    parked: list[Vehicle] = []
    for tick in range(max(1, int(round(config.sim.discard_s)))):
        t = float(tick)
        parked = [v for v in parked if not should_depart(v, t)]
        moving.extend(traffic.spawn(t))
        still_moving: list[Vehicle] = []
        for v in moving:
            traffic.step(v)
            if traffic.maybe_park(v, t):
                parked.append(v)
            else:
                still_moving.append(v)
        moving = still_moving
    return [v.cell for v in parked]


def random_assignment_bounds(
    config: RunConfig,
    num_samples: int,
    rng: np.random.Generator | None = None,
) -> BoundsResult:
    """Explore the (mean signal, mean saturation) plane by random assignment.

    The assignable population is a parked-car snapshot produced by the
    config's own traffic process (capped at bounds_fill_count cars); each
    sample activates a uniformly random number of them at random membership
    and measures the resulting network. Empty draws carry no defined means;
    they are skipped and counted.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([config.sim.seed, 2]))
    grid = build_grid(config)
    prop = build_propagation(config)
    cache = FootprintCache(grid, prop)
    usable = grid.usable_cells
    cell_index = {c: i for i, c in enumerate(usable)}
    fill_cells = _warmed_up_parked_cells(config, rng)
    if not fill_cells:
        raise ConfigurationError(
            "parking process left no parked vehicles to assign; "
            "check traffic.arrival_rate_vps and sim.discard_s"
        )
    if len(fill_cells) > config.sim.bounds_fill_count:
        keep = rng.choice(len(fill_cells), size=config.sim.bounds_fill_count, replace=False)
        fill_cells = [fill_cells[int(i)] for i in sorted(keep)]
    n_cars = len(fill_cells)

    footprints = np.zeros((n_cars, len(usable)), dtype=np.int8)
    for row, cell in enumerate(fill_cells):
        for c, s in cache.footprint(cell).items():
            footprints[row, cell_index[c]] = s
    by_class = [(footprints == s).astype(np.float32) for s in range(1, 6)]
    any_cover = (footprints > 0).astype(np.float32)

    samples: list[tuple[float, float]] = []
    skipped = 0
    batch_size = 2048
    pending_rows: list[np.ndarray] = []

    def flush() -> None:
        if not pending_rows:
            return
        mask = np.stack(pending_rows)
        count = mask @ any_cover
        best = np.zeros_like(count)
        for s in range(5, 0, -1):
            hits = mask @ by_class[s - 1]
            best = np.where((best == 0) & (hits > 0), float(s), best)
        n_cov = (count > 0).sum(axis=1)
        mean_sig = best.sum(axis=1) / n_cov
        mean_sat = count.sum(axis=1) / n_cov
        samples.extend((float(a), float(b)) for a, b in zip(mean_sig, mean_sat))
        pending_rows.clear()

    for _ in range(num_samples):
        k = int(rng.integers(0, n_cars + 1))
        if k == 0:
            skipped += 1
            continue
        chosen = rng.choice(n_cars, size=k, replace=False)
        row = np.zeros(n_cars, dtype=np.float32)
        row[chosen] = 1.0
        pending_rows.append(row)
        if len(pending_rows) >= batch_size:
            flush()
    flush()
    return BoundsResult(samples=samples, skipped=skipped, fill_cells=fill_cells)


# wire formats


def write_metrics_csv(metrics: Iterable[MetricsSample], path) -> None:
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in metrics:
            fh.write(
                f"{m.t:.0f},{m.active_rsus},{m.coverage_pct:.6f},"
                f"{m.mean_signal:.6f},{m.mean_saturation:.6f},{m.area_per_rsu_m2:.3f}\n"
            )


def write_lifetimes_csv(records: Iterable[RsuLifetimeRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(LIFETIMES_HEADER + "\n")
        for r in records:
            fh.write(f"{r.entity_id},{r.assigned_at:.0f},{r.revoked_at:.0f},{r.cause}\n")


def write_commands_csv(commands: Iterable[CommandRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(COMMANDS_HEADER + "\n")
        for c in commands:
            fh.write(f"{c.time_s:.0f},{c.maker_id},{c.verb},{c.target_id}\n")


def write_bounds_csv(samples: Iterable[tuple[float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write(BOUNDS_HEADER + "\n")
        for sig, sat in samples:
            fh.write(f"{sig:.6f},{sat:.6f}\n")


def write_manifest(
    config: RunConfig, result: RunResult | None, path, extra: dict | None = None
) -> None:
    from . import __version__

    payload = {
        "package_version": __version__,
        "seed": config.sim.seed,
        "config_digest": config.digest(),
        "config": {k: str(v) for k, v in config.flat_items().items()},
    }
    if result is not None:
        payload["message_counts"] = result.message_counts
        payload["parking_events"] = result.parking_events
        payload["assignments"] = result.assignments
        payload["decisions"] = result.decisions
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
