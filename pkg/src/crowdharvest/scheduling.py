"""Transmission scheduling for a source-relay pair under harvested energy.

Slot semantics shared by every solver, the exhaustive oracle, and the
validator:

* before slot k a node harvests its arrival; the battery is capped at
  its capacity and overflow is discarded, never credited;
* per slot the system takes one action: the source transmits (the relay
  listens, paying the optional receive-energy cost), the relay forwards,
  or everyone stays silent; a node never receives and transmits in the
  same slot;
* transmit powers are quantised as fractions of the current battery,
  ``i / L`` for ``i = 0..L`` with L power levels, so every quantised
  choice is automatically energy-causal;
* one slot carries ``log2(1 + P * gain / noise)`` bits; the relay can
  forward at most what its buffer holds, and the buffer only contains
  bits received in earlier slots (information causality);
* in the delay-constrained mode bits must be forwarded in the slot
  right after reception or they are dropped.

Deterministic tie-breaking everywhere: higher delivered bits, then
lower spent energy, then earlier activity.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateModelError,
    InfeasibleDemandError,
    InvalidParameterError,
    ProblemTooLargeError,
)
from .rng import substream
from .swipt import LinkState, RelayMode, end_to_end_snr, optimize_split

__all__ = [
    "BernoulliArrivals",
    "TriStateArrivals",
    "MarkovArrivals",
    "DeterministicArrivals",
    "EnergyArrivalProcess",
    "simulate_arrivals",
    "ScheduleProblem",
    "Schedule",
    "validate_schedule",
    "offline_optimal",
    "brute_force_oracle",
    "min_relay_time",
    "directional_water_fill",
    "BatteryMdp",
    "Policy",
    "mdp_policy_iteration",
    "value_iteration_gain",
    "threshold_policy",
    "evaluate_policy",
    "combined_mode_controller",
    "ModeControllerResult",
    "SCHEDULE_CSV_HEADER",
    "schedule_to_csv",
]


# ---------------------------------------------------------------------------
# Energy arrival models.


@dataclass(frozen=True)
class BernoulliArrivals:
    """Energy E arrives with probability p per slot, otherwise nothing."""

    p: float
    energy_j: float
    kind: str = field(default="bernoulli", init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError("arrival probability must lie in [0, 1]")
        if self.energy_j <= 0:
            raise InvalidParameterError("arrival energy must be positive")


@dataclass(frozen=True)
class TriStateArrivals:
    """0, E, or 2E with probability 1/3 each."""

    energy_j: float
    kind: str = field(default="tri_state", init=False)

    def __post_init__(self) -> None:
        if self.energy_j <= 0:
            raise InvalidParameterError("arrival energy must be positive")


@dataclass(frozen=True)
class MarkovArrivals:
    """Finite energy-state chain; each state injects its energy per slot."""

    states_j: tuple[float, ...]
    transitions: tuple[tuple[float, ...], ...]
    kind: str = field(default="markov", init=False)

    def __post_init__(self) -> None:
        n = len(self.states_j)
        if n == 0:
            raise InvalidParameterError("need at least one energy state")
        if any(s < 0 for s in self.states_j):
            raise InvalidParameterError("state energies must be non-negative")
        if len(self.transitions) != n or any(len(row) != n for row in self.transitions):
            raise InvalidParameterError("transition matrix must be square")
        for row in self.transitions:
            if any(p < 0 for p in row):
                raise InvalidParameterError("transition probabilities must be non-negative")
            if abs(sum(row) - 1.0) > 1e-9:
                raise InvalidParameterError("transition matrix rows must sum to 1")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.transitions, dtype=float)

    def stationary(self) -> np.ndarray:
        p = self.matrix
        n = p.shape[0]
        a = np.vstack([p.T - np.eye(n), np.ones(n)])
        b = np.concatenate([np.zeros(n), [1.0]])
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.any(pi < -1e-9):
            raise DegenerateModelError("energy chain has no valid stationary law")
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()


@dataclass(frozen=True)
class DeterministicArrivals:
    """Arrival amounts known in advance."""

    trace_j: tuple[float, ...]
    kind: str = field(default="deterministic", init=False)

    def __post_init__(self) -> None:
        if any(e < 0 for e in self.trace_j):
            raise InvalidParameterError("trace entries must be non-negative")


EnergyArrivalProcess = (
    BernoulliArrivals | TriStateArrivals | MarkovArrivals | DeterministicArrivals
)


def simulate_arrivals(process: EnergyArrivalProcess, k: int, seed: int) -> np.ndarray:
    """Length-k arrival trace; deterministic traces are truncated or zero-padded."""
    if k < 0:
        raise InvalidParameterError("slot count must be non-negative")
    rng = substream(seed, "arrivals")
    if isinstance(process, BernoulliArrivals):
        return np.where(rng.random(k) < process.p, process.energy_j, 0.0)
    if isinstance(process, TriStateArrivals):
        return rng.integers(0, 3, k).astype(float) * process.energy_j
    if isinstance(process, MarkovArrivals):
        p = process.matrix
        cum = np.cumsum(p, axis=1)
        out = np.empty(k)
        state = 0  # chains start in their first state
        draws = rng.random(k)
        for i in range(k):
            out[i] = process.states_j[state]
            state = int(np.searchsorted(cum[state], draws[i], side="right"))
            state = min(state, len(process.states_j) - 1)
        return out
    if isinstance(process, DeterministicArrivals):
        out = np.zeros(k)
        m = min(k, len(process.trace_j))
        out[:m] = process.trace_j[:m]
        return out
    raise InvalidParameterError(f"unknown arrival process {process!r}")


def mean_arrival(process: EnergyArrivalProcess) -> float:
    if isinstance(process, BernoulliArrivals):
        return process.p * process.energy_j
    if isinstance(process, TriStateArrivals):
        return process.energy_j
    if isinstance(process, MarkovArrivals):
        return float(process.stationary() @ np.asarray(process.states_j))
    if isinstance(process, DeterministicArrivals):
        return float(np.mean(process.trace_j)) if process.trace_j else 0.0
    raise InvalidParameterError(f"unknown arrival process {process!r}")


# ---------------------------------------------------------------------------
# Two-hop offline scheduling problem.


@dataclass(frozen=True)
class ScheduleProblem:
    slot_count: int
    slot_duration_s: float
    source_arrivals_j: tuple[float, ...]
    relay_arrivals_j: tuple[float, ...]
    source_gains: tuple[float, ...]
    relay_gains: tuple[float, ...]
    noise_power_w: float
    source_capacity_j: float = math.inf
    relay_capacity_j: float = math.inf
    rx_energy_cost_j: float = 0.0
    delay_constrained: bool = False
    initial_source_j: float = 0.0
    initial_relay_j: float = 0.0

    def __post_init__(self) -> None:
        k = self.slot_count
        if k < 1:
            raise InvalidParameterError("need at least one slot")
        for name in ("source_arrivals_j", "relay_arrivals_j", "source_gains", "relay_gains"):
            if len(getattr(self, name)) != k:
                raise InvalidParameterError(f"{name} must have length {k}")
        if self.slot_duration_s <= 0:
            raise InvalidParameterError("slot duration must be positive")
        if self.noise_power_w <= 0:
            raise InvalidParameterError("noise power must be positive")
        if self.source_capacity_j <= 0 or self.relay_capacity_j <= 0:
            raise InvalidParameterError("battery capacities must be positive (or inf)")
        if self.rx_energy_cost_j < 0:
            raise InvalidParameterError("receive cost must be non-negative")

    def to_json(self) -> str:
        doc = {
            "slot_count": self.slot_count,
            "slot_duration_s": self.slot_duration_s,
            "source_arrivals_j": list(self.source_arrivals_j),
            "relay_arrivals_j": list(self.relay_arrivals_j),
            "source_gains": list(self.source_gains),
            "relay_gains": list(self.relay_gains),
            "noise_power_w": self.noise_power_w,
            "source_capacity_j": self.source_capacity_j if math.isfinite(self.source_capacity_j) else None,
            "relay_capacity_j": self.relay_capacity_j if math.isfinite(self.relay_capacity_j) else None,
            "rx_energy_cost_j": self.rx_energy_cost_j,
            "delay_constrained": self.delay_constrained,
            "initial_source_j": self.initial_source_j,
            "initial_relay_j": self.initial_relay_j,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "ScheduleProblem":
        doc = json.loads(text)
        return ScheduleProblem(
            slot_count=int(doc["slot_count"]),
            slot_duration_s=float(doc["slot_duration_s"]),
            source_arrivals_j=tuple(doc["source_arrivals_j"]),
            relay_arrivals_j=tuple(doc["relay_arrivals_j"]),
            source_gains=tuple(doc["source_gains"]),
            relay_gains=tuple(doc["relay_gains"]),
            noise_power_w=float(doc["noise_power_w"]),
            source_capacity_j=math.inf if doc["source_capacity_j"] is None else float(doc["source_capacity_j"]),
            relay_capacity_j=math.inf if doc["relay_capacity_j"] is None else float(doc["relay_capacity_j"]),
            rx_energy_cost_j=float(doc.get("rx_energy_cost_j", 0.0)),
            delay_constrained=bool(doc.get("delay_constrained", False)),
            initial_source_j=float(doc.get("initial_source_j", 0.0)),
            initial_relay_j=float(doc.get("initial_relay_j", 0.0)),
        )


@dataclass(frozen=True)
class Schedule:
    source_powers_w: tuple[float, ...]
    relay_powers_w: tuple[float, ...]
    source_indicators: tuple[int, ...]
    relay_indicators: tuple[int, ...]
    bits_per_slot: tuple[float, ...]  # bits delivered to the destination per slot
    objective_value: float
    objective_kind: str = "delivered_bits"  # or "relay_slots"


SCHEDULE_CSV_HEADER = ["slot", "P_s", "P_r", "d_s", "d_r", "bits"]


def schedule_to_csv(schedule: Schedule) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCHEDULE_CSV_HEADER)
    for k in range(len(schedule.source_powers_w)):
        writer.writerow(
            [
                k,
                f"{schedule.source_powers_w[k]:.10g}",
                f"{schedule.relay_powers_w[k]:.10g}",
                schedule.source_indicators[k],
                schedule.relay_indicators[k],
                f"{schedule.bits_per_slot[k]:.10g}",
            ]
        )
    return buf.getvalue()


def _rate_bits(spend_j: float, gain: float, problem: ScheduleProblem) -> float:
    if spend_j <= 0 or gain <= 0:
        return 0.0
    power = spend_j / problem.slot_duration_s
    return math.log2(1.0 + power * gain / problem.noise_power_w)


def validate_schedule(problem: ScheduleProblem, schedule: Schedule, tol: float = 1e-9) -> None:
    """Independent causality audit; raises InvalidParameterError on violation.

    Recomputes the battery and buffer trajectories from the raw powers
    and checks energy causality, capacity bounds, half-duplex exclusivity,
    information causality, and the claimed per-slot delivered bits.
    """
    k_slots = problem.slot_count
    b_s, b_r = problem.initial_source_j, problem.initial_relay_j
    buffer_bits = 0.0
    for k in range(k_slots):
        b_s = min(problem.source_capacity_j, b_s + problem.source_arrivals_j[k])
        b_r = min(problem.relay_capacity_j, b_r + problem.relay_arrivals_j[k])
        p_s, p_r = schedule.source_powers_w[k], schedule.relay_powers_w[k]
        d_s, d_r = schedule.source_indicators[k], schedule.relay_indicators[k]
        if d_s and d_r:
            raise InvalidParameterError(f"slot {k}: source and relay both active")
        if (p_s > 0) != bool(d_s) or (p_r > 0) != bool(d_r):
            raise InvalidParameterError(f"slot {k}: indicator inconsistent with power")
        spend_s = p_s * problem.slot_duration_s
        spend_r = p_r * problem.slot_duration_s
        if spend_s > b_s + tol:
            raise InvalidParameterError(f"slot {k}: source energy causality violated")
        if spend_r > b_r + tol:
            raise InvalidParameterError(f"slot {k}: relay energy causality violated")
        delivered = schedule.bits_per_slot[k]
        received = 0.0
        if d_s:
            if b_r + tol >= problem.rx_energy_cost_j:
                b_r -= problem.rx_energy_cost_j
                received = _rate_bits(spend_s, problem.source_gains[k], problem)
            if delivered > tol:
                raise InvalidParameterError(f"slot {k}: delivery during a source slot")
        elif d_r:
            capacity_bits = _rate_bits(spend_r, problem.relay_gains[k], problem)
            if delivered > min(buffer_bits, capacity_bits) + tol:
                raise InvalidParameterError(
                    f"slot {k}: information causality violated "
                    f"(delivered {delivered}, buffer {buffer_bits})"
                )
        elif delivered > tol:
            raise InvalidParameterError(f"slot {k}: delivery during an idle slot")
        b_s -= spend_s
        b_r -= spend_r
        if b_s < -tol or b_r < -tol:
            raise InvalidParameterError(f"slot {k}: battery went negative")
        b_s, b_r = max(b_s, 0.0), max(b_r, 0.0)
        if problem.delay_constrained:
            buffer_bits = received
        else:
            buffer_bits = buffer_bits - delivered + received
            buffer_bits = max(buffer_bits, 0.0)


# Leveled state expansion. Actions are encoded 0 = idle, 1..L = source
# fraction i/L, L+1..2L = relay fraction (i-L)/L.


def _expand_actions(power_levels: int) -> list[tuple[str, float]]:
    acts: list[tuple[str, float]] = [("idle", 0.0)]
    acts += [("src", i / power_levels) for i in range(1, power_levels + 1)]
    acts += [("rel", i / power_levels) for i in range(1, power_levels + 1)]
    return acts


class _PathValue:
    """Accumulated objective along one DP path.

    Total order: higher bits, then lower energy, then earlier activity,
    then the action ids. Paths are parent-linked so extending one is
    O(1); the full key is only materialised on deep ties.
    """

    __slots__ = ("bits", "energy", "relay_slots", "parent", "action", "act_code", "_key")

    def __init__(self, bits, energy, relay_slots, parent, action, act_code):
        self.bits = bits
        self.energy = energy
        self.relay_slots = relay_slots
        self.parent = parent
        self.action = action
        self.act_code = act_code  # 0 = active slot, 1 = idle slot
        self._key = None

    def path(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        actions: list[int] = []
        activity: list[int] = []
        node = self
        while node.parent is not None:
            actions.append(node.action)
            activity.append(node.act_code)
            node = node.parent
        actions.reverse()
        activity.reverse()
        return tuple(actions), tuple(activity)

    @property
    def actions(self) -> tuple[int, ...]:
        return self.path()[0]

    @property
    def key(self) -> tuple:
        if self._key is None:
            actions, activity = self.path()
            self._key = (-round(self.bits, 12), round(self.energy, 12), activity, actions)
        return self._key

    def beats(self, other: "_PathValue") -> bool:
        a, b = round(self.bits, 12), round(other.bits, 12)
        if a != b:
            return a > b
        a, b = round(self.energy, 12), round(other.energy, 12)
        if a != b:
            return a < b
        return self.key < other.key


def _transition(
    problem: ScheduleProblem,
    k: int,
    state: tuple[float, float, float],
    act_kind: str,
    frac: float,
) -> tuple[tuple[float, float, float], float, float, bool]:
    """One slot step; returns (state', delivered_bits, energy_spent, active)."""
    b_s, b_r, buf = state
    b_s = min(problem.source_capacity_j, b_s + problem.source_arrivals_j[k])
    b_r = min(problem.relay_capacity_j, b_r + problem.relay_arrivals_j[k])
    delivered = 0.0
    energy = 0.0
    received = 0.0
    active = False
    if act_kind == "src":
        spend = frac * b_s
        if spend > 0:
            active = True
            energy += spend
            b_s -= spend
            if b_r >= problem.rx_energy_cost_j:
                b_r -= problem.rx_energy_cost_j
                energy += problem.rx_energy_cost_j
                received = _rate_bits(spend, problem.source_gains[k], problem)
    elif act_kind == "rel":
        spend = frac * b_r
        if spend > 0:
            active = True
            energy += spend
            b_r -= spend
            delivered = min(buf, _rate_bits(spend, problem.relay_gains[k], problem))
    if problem.delay_constrained:
        buf_new = received
    else:
        buf_new = buf - delivered + received
    return (b_s, b_r, buf_new), delivered, energy, active


def _round_state(state: tuple[float, float, float]) -> tuple[float, float, float]:
    return (round(state[0], 12), round(state[1], 12), round(state[2], 12))


def _run_dp(
    problem: ScheduleProblem, power_levels: int, state_bound: int, pareto: bool
) -> dict[tuple[float, float, float], list[_PathValue]]:
    """Forward DP over reachable (source battery, relay battery, buffer).

    With ``pareto`` the per-state value is the Pareto set over (delivered
    bits up, relay slots down), needed for minimum-relay-time queries;
    otherwise a single best path per state suffices (throughput
    objective). The slot transition is inlined: per state the harvested
    batteries are computed once and each quantised action extends the
    path in O(1).
    """
    fractions = [i / power_levels for i in range(1, power_levels + 1)]
    cap_s, cap_r = problem.source_capacity_j, problem.relay_capacity_j
    rx_cost = problem.rx_energy_cost_j
    dt = problem.slot_duration_s
    noise = problem.noise_power_w
    delay = problem.delay_constrained
    log2 = math.log2

    start = _round_state((problem.initial_source_j, problem.initial_relay_j, 0.0))
    layer: dict[tuple[float, float, float], list[_PathValue]] = {
        start: [_PathValue(0.0, 0.0, 0, None, -1, 1)]
    }
    for k in range(problem.slot_count):
        e_s, e_r = problem.source_arrivals_j[k], problem.relay_arrivals_j[k]
        h_k, g_k = problem.source_gains[k], problem.relay_gains[k]
        nxt: dict[tuple[float, float, float], list[_PathValue]] = {}

        def emit(state, values, delivered, energy, relay_inc, act_code, action_id):
            key = _round_state(state)
            bucket = nxt.get(key)
            if bucket is None:
                bucket = nxt[key] = []
            for v in values:
                cand = _PathValue(
                    v.bits + delivered, v.energy + energy,
                    v.relay_slots + relay_inc, v, action_id, act_code,
                )
                if pareto:
                    _pareto_insert(bucket, cand)
                elif not bucket:
                    bucket.append(cand)
                elif cand.beats(bucket[0]):
                    bucket[0] = cand
        for (b_s, b_r, buf), values in layer.items():
            bsh = b_s + e_s
            if bsh > cap_s:
                bsh = cap_s
            brh = b_r + e_r
            if brh > cap_r:
                brh = cap_r
            buf_idle = 0.0 if delay else buf
            emit((bsh, brh, buf_idle), values, 0.0, 0.0, 0, 1, 0)
            if bsh > 0:
                rx_ok = brh >= rx_cost
                br_after = brh - rx_cost if rx_ok else brh
                for i, frac in enumerate(fractions):
                    spend = frac * bsh
                    received = log2(1.0 + (spend / dt) * h_k / noise) if rx_ok else 0.0
                    emit(
                        (bsh - spend, br_after, received if delay else buf + received),
                        values,
                        0.0,
                        spend + (rx_cost if rx_ok else 0.0),
                        0,
                        0,
                        1 + i,
                    )
            if brh > 0 and buf > 0:
                for i, frac in enumerate(fractions):
                    spend = frac * brh
                    rate = log2(1.0 + (spend / dt) * g_k / noise)
                    delivered = buf if buf < rate else rate
                    emit(
                        (bsh, brh - spend, 0.0 if delay else buf - delivered),
                        values,
                        delivered,
                        spend,
                        1,
                        0,
                        1 + power_levels + i,
                    )
        total = sum(len(v) for v in nxt.values())
        if total > state_bound:
            raise ProblemTooLargeError(
                f"state space exceeded the bound ({total} > {state_bound}) at slot {k}"
            )
        layer = nxt
    return layer


def _pareto_insert(bucket: list[_PathValue], cand: _PathValue) -> None:
    """Keep candidates not dominated in (bits up, relay_slots down)."""
    eps = 1e-12
    for v in bucket:
        if v.bits >= cand.bits - eps and v.relay_slots <= cand.relay_slots:
            if (v.bits > cand.bits + eps or v.relay_slots < cand.relay_slots
                    or v.key <= cand.key):
                return
    bucket[:] = [
        v
        for v in bucket
        if not (
            cand.bits >= v.bits - eps
            and cand.relay_slots <= v.relay_slots
            and (cand.bits > v.bits + eps or cand.relay_slots < v.relay_slots
                 or cand.key <= v.key)
        )
    ]
    bucket.append(cand)


def _replay(problem: ScheduleProblem, action_ids: tuple[int, ...], power_levels: int,
            objective_kind: str = "delivered_bits") -> Schedule:
    acts = _expand_actions(power_levels)
    state = (problem.initial_source_j, problem.initial_relay_j, 0.0)
    p_s, p_r, d_s, d_r, bits = [], [], [], [], []
    relay_slots = 0
    for k, ai in enumerate(action_ids):
        kind, frac = acts[ai]
        b_s0 = min(problem.source_capacity_j, state[0] + problem.source_arrivals_j[k])
        b_r0 = min(problem.relay_capacity_j, state[1] + problem.relay_arrivals_j[k])
        state, delivered, _, active = _transition(problem, k, state, kind, frac)
        if kind == "src" and active:
            spend = frac * b_s0
            p_s.append(spend / problem.slot_duration_s)
            p_r.append(0.0)
            d_s.append(1)
            d_r.append(0)
        elif kind == "rel" and active:
            spend = frac * b_r0
            p_s.append(0.0)
            p_r.append(spend / problem.slot_duration_s)
            d_s.append(0)
            d_r.append(1)
            relay_slots += 1
        else:
            p_s.append(0.0)
            p_r.append(0.0)
            d_s.append(0)
            d_r.append(0)
        bits.append(delivered)
    objective = sum(bits) if objective_kind == "delivered_bits" else float(relay_slots)
    return Schedule(
        tuple(p_s), tuple(p_r), tuple(d_s), tuple(d_r), tuple(bits),
        objective, objective_kind,
    )


def offline_optimal(
    problem: ScheduleProblem, power_levels: int = 8, state_bound: int = 500_000
) -> Schedule:
    """Throughput-maximal schedule over quantised battery-fraction powers.

    Dynamic program over reachable (source battery, relay battery,
    buffered bits) states; exact state arithmetic, so the objective
    matches the exhaustive oracle on any instance both can solve. The
    state-space guard rejects oversized problems.
    """
    layer = _run_dp(problem, power_levels, state_bound, pareto=False)
    best: _PathValue | None = None
    for values in layer.values():
        for v in values:
            if best is None or v.beats(best):
                best = v
    assert best is not None
    return _replay(problem, best.actions, power_levels)


def brute_force_oracle(
    problem: ScheduleProblem, power_levels: int = 8, max_schedules: int = 10_000_000
) -> Schedule:
    """Exhaustive enumeration of every quantised schedule (vectorised).

    Independent of the DP path: simulates all action sequences with
    array arithmetic and picks the best objective under the documented
    tie-breaking.
    """
    n_actions = 2 * power_levels + 1
    n_seq = n_actions ** problem.slot_count
    if n_seq > max_schedules:
        raise ProblemTooLargeError(f"{n_seq} schedules exceed the oracle bound {max_schedules}")
    actions = np.array(
        list(itertools.product(range(n_actions), repeat=problem.slot_count)), dtype=np.int64
    )
    n = actions.shape[0]
    b_s = np.full(n, float(problem.initial_source_j))
    b_r = np.full(n, float(problem.initial_relay_j))
    buf = np.zeros(n)
    bits = np.zeros(n)
    energy = np.zeros(n)
    activity = np.zeros((n, problem.slot_count), dtype=np.int8)
    dt = problem.slot_duration_s
    for k in range(problem.slot_count):
        b_s = np.minimum(problem.source_capacity_j, b_s + problem.source_arrivals_j[k])
        b_r = np.minimum(problem.relay_capacity_j, b_r + problem.relay_arrivals_j[k])
        act = actions[:, k]
        src = (act >= 1) & (act <= power_levels)
        rel = act > power_levels
        frac = np.where(
            src, act / power_levels, np.where(rel, (act - power_levels) / power_levels, 0.0)
        )
        spend_s = np.where(src, frac * b_s, 0.0)
        rx_ok = src & (spend_s > 0) & (b_r >= problem.rx_energy_cost_j)
        received = np.where(
            rx_ok,
            np.log2(1.0 + (spend_s / dt) * problem.source_gains[k] / problem.noise_power_w),
            0.0,
        )
        spend_r = np.where(rel, frac * b_r, 0.0)
        capacity_bits = np.where(
            spend_r > 0,
            np.log2(1.0 + (spend_r / dt) * problem.relay_gains[k] / problem.noise_power_w),
            0.0,
        )
        delivered = np.minimum(buf, capacity_bits)
        bits += delivered
        b_s -= spend_s
        b_r -= spend_r
        b_r -= np.where(rx_ok, problem.rx_energy_cost_j, 0.0)
        energy += spend_s + spend_r + np.where(rx_ok, problem.rx_energy_cost_j, 0.0)
        if problem.delay_constrained:
            buf = received
        else:
            buf = buf - delivered + received
        activity[:, k] = np.where((spend_s > 0) | (spend_r > 0), 0, 1)
    keys = tuple(activity[:, k] for k in reversed(range(problem.slot_count)))
    order = np.lexsort(keys + (np.round(energy, 12), -np.round(bits, 12)))
    best = int(order[0])
    return _replay(problem, tuple(int(a) for a in actions[best]), power_levels)


def min_relay_time(
    problem: ScheduleProblem,
    demand_bits: float,
    power_levels: int = 8,
    state_bound: int = 500_000,
) -> Schedule:
    """Fewest active relay slots that still deliver the demanded bits.

    Infeasible demands raise :class:`InfeasibleDemandError` carrying the
    maximum achievable bits for the instance.
    """
    if demand_bits < 0:
        raise InvalidParameterError("demand must be non-negative")
    layer = _run_dp(problem, power_levels, state_bound, pareto=True)
    candidates: list[_PathValue] = [v for values in layer.values() for v in values]
    max_bits = max(v.bits for v in candidates)
    feasible = [v for v in candidates if v.bits >= demand_bits - 1e-9]
    if not feasible:
        raise InfeasibleDemandError(
            f"demand {demand_bits} bits infeasible; at most {max_bits} achievable",
            max_achievable_bits=max_bits,
        )
    best = min(feasible, key=lambda v: (v.relay_slots,) + v.key)
    schedule = _replay(problem, best.actions, power_levels, objective_kind="relay_slots")
    return schedule


# ---------------------------------------------------------------------------
# Directional water-filling (single hop).


def _waterfill_segment(floors: np.ndarray, budget: float) -> np.ndarray:
    """Spend ``budget`` over slots with the given water floors at one level."""
    if budget <= 0:
        return np.zeros_like(floors)
    order = np.sort(floors)
    level = budget / floors.size + order.mean()  # fallback: all slots active
    for m in range(1, floors.size + 1):
        candidate = (budget + order[:m].sum()) / m
        upper = order[m] if m < floors.size else math.inf
        if order[m - 1] - 1e-15 <= candidate <= upper + 1e-15:
            level = candidate
            break
    spend = np.maximum(0.0, level - floors)
    total = spend.sum()
    if total > 0:  # absorb fp residue so prefix accounting stays exact
        spend *= budget / total
    return spend


def directional_water_fill(
    arrivals_j: np.ndarray,
    gains: np.ndarray,
    noise_w: float,
    capacity_j: float = math.inf,
    slot_duration_s: float = 1.0,
) -> np.ndarray:
    """Throughput-optimal single-hop powers with forward-only energy flow.

    Maximises sum log(1 + s_k g_k / (noise dt)) subject to energy
    causality (cumulative spend through k never exceeds cumulative
    arrivals) and a finite battery (deferred energy never exceeds the
    capacity, so spends are floored to pre-empt overflow; a single
    arrival larger than the battery is rejected as unavoidable
    overflow). Classic directional structure: one water level per
    segment, levels step up across boundaries where the battery runs
    empty and step down where it is full.

    Implementation: recursive boundary pinning. Water-fill the whole
    horizon at one level with the full energy budget; while any
    cumulative-spend bound is violated, pin the most violated boundary
    to its bound and recurse on both halves.
    """
    e = np.asarray(arrivals_j, dtype=float)
    g = np.asarray(gains, dtype=float)
    if e.ndim != 1 or e.shape != g.shape or e.size == 0:
        raise InvalidParameterError("arrivals and gains must be matched 1-D arrays")
    if np.any(e < 0) or np.any(g <= 0):
        raise InvalidParameterError("arrivals must be >= 0 and gains > 0")
    if noise_w <= 0 or slot_duration_s <= 0:
        raise InvalidParameterError("noise and slot duration must be positive")
    if capacity_j <= 0:
        raise InvalidParameterError("capacity must be positive")
    if np.any(e > capacity_j):
        raise InvalidParameterError(
            "an arrival exceeds the battery capacity; unavoidable overflow is out of scope"
        )
    k = e.size
    floors = noise_w * slot_duration_s / g
    cum_e = np.cumsum(e)
    upper = cum_e.copy()  # causality: cum spend through slot i <= cum arrivals
    lower = np.zeros(k)  # overflow pre-emption: defer at most the battery capacity
    if math.isfinite(capacity_j):
        lower[:-1] = np.maximum(0.0, cum_e[1:] - capacity_j)
    total = float(cum_e[-1])  # spending everything is always optimal
    spend = np.zeros(k)
    eps = 1e-12 * max(total, 1.0)

    def solve(lo: int, hi: int, base: float, target: float) -> None:
        seg = _waterfill_segment(floors[lo : hi + 1], target - base)
        if hi > lo:
            cum = base + np.cumsum(seg)[:-1]
            over = cum - upper[lo:hi]
            under = lower[lo:hi] - cum
            worst = max(float(over.max()), float(under.max()))
            if worst > eps:
                if float(over.max()) >= float(under.max()):
                    j = lo + int(np.argmax(over))
                    pin = upper[j]
                else:
                    j = lo + int(np.argmax(under))
                    pin = lower[j]
                solve(lo, j, base, pin)
                solve(j + 1, hi, pin, target)
                return
        spend[lo : hi + 1] = seg

    solve(0, k - 1, 0.0, total)
    return spend / slot_duration_s


# ---------------------------------------------------------------------------
# Finite-battery MDP with Markov energy arrivals.


@dataclass(frozen=True)
class BatteryMdp:
    """Quantised battery, Markov energy chain, discrete spend levels.

    State: (battery level after harvesting, current energy state).
    Action: spend level, feasible when spend <= battery. Reward:
    log2(1 + spend * snr_per_joule). The battery, spends, and arrival
    energies are expressed on a common quantum so the chain stays exact;
    energy beyond the top bucket is discarded.
    """

    arrivals: MarkovArrivals
    battery_buckets: int
    bucket_j: float
    spend_levels_j: tuple[float, ...]
    snr_per_joule: float
    reward_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.reward_scale <= 0:
            raise InvalidParameterError("reward scale must be positive")
        if self.battery_buckets < 2:
            raise InvalidParameterError("need at least two battery buckets")
        if self.bucket_j <= 0:
            raise InvalidParameterError("battery quantum must be positive")
        if self.snr_per_joule <= 0:
            raise InvalidParameterError("snr per joule must be positive")
        for v in self.spend_levels_j + self.arrivals.states_j:
            units = v / self.bucket_j
            if abs(units - round(units)) > 1e-9:
                raise InvalidParameterError(
                    "spend levels and arrival energies must be multiples of the quantum"
                )
        if 0.0 not in self.spend_levels_j:
            raise InvalidParameterError("spend levels must include 0")

    @property
    def capacity_j(self) -> float:
        return (self.battery_buckets - 1) * self.bucket_j

    @property
    def n_states(self) -> int:
        return self.battery_buckets * len(self.arrivals.states_j)

    def state_index(self, battery_bucket: int, energy_state: int) -> int:
        return battery_bucket * len(self.arrivals.states_j) + energy_state

    def feasible_actions(self, battery_bucket: int) -> list[int]:
        b_j = battery_bucket * self.bucket_j
        return [i for i, s in enumerate(self.spend_levels_j) if s <= b_j + 1e-12]

    def reward(self, action: int) -> float:
        return self.reward_scale * math.log2(
            1.0 + self.spend_levels_j[action] * self.snr_per_joule
        )

    def transition_row(self, battery_bucket: int, energy_state: int, action: int) -> np.ndarray:
        """Distribution over next states for one (state, action) pair."""
        n_e = len(self.arrivals.states_j)
        row = np.zeros(self.n_states)
        spend_units = round(self.spend_levels_j[action] / self.bucket_j)
        left = battery_bucket - spend_units
        p = self.arrivals.matrix[energy_state]
        for e_next in range(n_e):
            arrive_units = round(self.arrivals.states_j[e_next] / self.bucket_j)
            b_next = min(self.battery_buckets - 1, left + arrive_units)
            row[self.state_index(b_next, e_next)] += p[e_next]
        return row


@dataclass(frozen=True)
class Policy:
    """Deterministic stationary policy with its long-run average reward."""

    mdp: BatteryMdp
    actions: np.ndarray  # shape (buckets, n_energy_states) of spend level indices
    gain: float
    bias: np.ndarray | None = None

    def action_at(self, battery_bucket: int, energy_state: int) -> int:
        return int(self.actions[battery_bucket, energy_state])

    def to_json(self) -> str:
        doc = {
            "mdp": {
                "arrival_states_j": list(self.mdp.arrivals.states_j),
                "arrival_transitions": [list(r) for r in self.mdp.arrivals.transitions],
                "battery_buckets": self.mdp.battery_buckets,
                "bucket_j": self.mdp.bucket_j,
                "spend_levels_j": list(self.mdp.spend_levels_j),
                "snr_per_joule": self.mdp.snr_per_joule,
                "reward_scale": self.mdp.reward_scale,
            },
            "actions": self.actions.tolist(),
            "gain": self.gain,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "Policy":
        doc = json.loads(text)
        m = doc["mdp"]
        mdp = BatteryMdp(
            arrivals=MarkovArrivals(
                states_j=tuple(m["arrival_states_j"]),
                transitions=tuple(tuple(r) for r in m["arrival_transitions"]),
            ),
            battery_buckets=int(m["battery_buckets"]),
            bucket_j=float(m["bucket_j"]),
            spend_levels_j=tuple(m["spend_levels_j"]),
            snr_per_joule=float(m["snr_per_joule"]),
            reward_scale=float(m.get("reward_scale", 1.0)),
        )
        return Policy(mdp, np.asarray(doc["actions"], dtype=np.int64), float(doc["gain"]))


def _policy_tables(mdp: BatteryMdp, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = mdp.n_states
    n_e = len(mdp.arrivals.states_j)
    p = np.zeros((n, n))
    r = np.zeros(n)
    for b in range(mdp.battery_buckets):
        for e in range(n_e):
            s = mdp.state_index(b, e)
            a = int(actions[b, e])
            p[s] = mdp.transition_row(b, e, a)
            r[s] = mdp.reward(a)
    return p, r


def _evaluate_average_reward(p: np.ndarray, r: np.ndarray) -> tuple[float, np.ndarray]:
    """Solve h + g*1 = r + P h with h[0] = 0; raises on multichain models."""
    n = p.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = np.eye(n) - p
    a[:n, n] = 1.0
    a[n, 0] = 1.0
    b = np.concatenate([r, [0.0]])
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateModelError(
            "average-reward evaluation failed: the closed-loop chain is not unichain"
        ) from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateModelError("average-reward evaluation produced non-finite values")
    return float(x[n]), x[:n]


def mdp_policy_iteration(mdp: BatteryMdp, max_iterations: int = 1000) -> Policy:
    """Average-reward policy iteration run until the policy is stable."""
    n_e = len(mdp.arrivals.states_j)
    actions = np.zeros((mdp.battery_buckets, n_e), dtype=np.int64)
    for b in range(mdp.battery_buckets):  # myopic start: biggest feasible spend
        feas = mdp.feasible_actions(b)
        actions[b, :] = max(feas, key=lambda a: mdp.reward(a))
    for _ in range(max_iterations):
        p, r = _policy_tables(mdp, actions)
        gain, bias = _evaluate_average_reward(p, r)
        new_actions = actions.copy()
        for b in range(mdp.battery_buckets):
            for e in range(n_e):
                best_a = int(actions[b, e])
                row = mdp.transition_row(b, e, best_a)
                best_q = mdp.reward(best_a) + float(row @ bias)
                for a in mdp.feasible_actions(b):
                    q = mdp.reward(a) + float(mdp.transition_row(b, e, a) @ bias)
                    if q > best_q + 1e-10:  # strict improvement keeps iteration stable
                        best_q = q
                        best_a = a
                new_actions[b, e] = best_a
        if np.array_equal(new_actions, actions):
            return Policy(mdp, actions, gain, bias)
        actions = new_actions
    raise DegenerateModelError("policy iteration did not stabilise")


def value_iteration_gain(
    mdp: BatteryMdp, span_tol: float = 1e-9, max_iterations: int = 200_000
) -> float:
    """Average reward via relative value iteration (independent solver).

    A half-step damping makes the update aperiodic; the gain is the
    midpoint of the Bellman-residual span once the span collapses.
    """
    n_e = len(mdp.arrivals.states_j)
    n = mdp.n_states
    q_rows: list[list[tuple[float, np.ndarray]]] = []
    for b in range(mdp.battery_buckets):
        for e in range(n_e):
            q_rows.append(
                [(mdp.reward(a), mdp.transition_row(b, e, a)) for a in mdp.feasible_actions(b)]
            )
    v = np.zeros(n)
    for _ in range(max_iterations):
        tv = np.array([max(r + row @ v for r, row in choices) for choices in q_rows])
        diff = tv - v
        span = float(diff.max() - diff.min())
        if span < span_tol:
            return float((diff.max() + diff.min()) / 2.0)
        v = 0.5 * v + 0.5 * tv
        v -= v[0]
    raise DegenerateModelError("value iteration did not converge")


def threshold_policy(
    mdp: BatteryMdp, theta_j: float, spend_j: float | None = None
) -> Policy:
    """Transmit a fixed amount whenever the battery reaches the threshold.

    The spend defaults to one battery quantum; it is truncated to the
    largest feasible level when the battery holds less than the target.
    The returned policy carries its exact long-run gain.
    """
    if theta_j < 0:
        raise InvalidParameterError("threshold must be non-negative")
    target = mdp.bucket_j if spend_j is None else spend_j
    n_e = len(mdp.arrivals.states_j)
    actions = np.zeros((mdp.battery_buckets, n_e), dtype=np.int64)
    levels = mdp.spend_levels_j
    for b in range(mdp.battery_buckets):
        b_j = b * mdp.bucket_j
        if b_j + 1e-12 < theta_j or b_j <= 0:
            continue
        feasible = [i for i, s in enumerate(levels) if 0 < s <= min(target, b_j) + 1e-12]
        if feasible:
            actions[b, :] = max(feasible, key=lambda i: levels[i])
    p, r = _policy_tables(mdp, actions)
    try:
        gain, bias = _evaluate_average_reward(p, r)
    except DegenerateModelError:
        # never-transmitting policies on periodic chains: evaluate by stationarity
        gain, bias = _stationary_gain(p, r), None
    return Policy(mdp, actions, gain, bias)


def _stationary_gain(p: np.ndarray, r: np.ndarray) -> float:
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones(n)])
    b = np.concatenate([np.zeros(n), [1.0]])
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    total = pi.sum()
    if total <= 0:
        raise DegenerateModelError("no stationary distribution")
    return float((pi / total) @ r)


def evaluate_policy(
    policy: Policy,
    process: EnergyArrivalProcess | None = None,
    horizon: int = 100_000,
    seed: int = 0,
    exact: bool = False,
) -> float:
    """Average reward per slot, by simulation or by exact stationary solve.

    The exact mode solves the closed-loop stationary equations and is
    available when the arrival process is the policy's own Markov chain.
    Simulation quantises the running battery to the policy's buckets
    (rounding down) before each lookup.
    """
    mdp = policy.mdp
    if process is None:
        process = mdp.arrivals
    if exact:
        if process is not mdp.arrivals and process != mdp.arrivals:
            raise InvalidParameterError("exact evaluation requires the policy's own chain")
        p, r = _policy_tables(mdp, policy.actions)
        return _stationary_gain(p, r)
    if horizon < 1:
        raise InvalidParameterError("horizon must be at least 1")
    arrivals = simulate_arrivals(process, horizon, seed)
    n_e = policy.actions.shape[1]
    e_idx = 0
    if isinstance(process, MarkovArrivals):
        states = np.asarray(process.states_j)
    else:
        states = None
    battery = 0.0
    total = 0.0
    for k in range(horizon):
        battery = min(mdp.capacity_j, battery + arrivals[k])
        if states is not None:
            matches = np.flatnonzero(np.isclose(states, arrivals[k]))
            e_idx = int(matches[0]) if matches.size else 0
        bucket = min(mdp.battery_buckets - 1, int(battery / mdp.bucket_j + 1e-12))
        a = policy.action_at(bucket, min(e_idx, n_e - 1))
        spend = min(mdp.spend_levels_j[a], battery)
        total += mdp.reward_scale * math.log2(1.0 + spend * mdp.snr_per_joule)
        battery -= spend
    return total / horizon


# ---------------------------------------------------------------------------
# Combined operation: ambient (non-SWIPT) harvesting with SWIPT fallback.


@dataclass(frozen=True)
class ModeControllerResult:
    modes: tuple[str, ...]  # "non_swipt" or "swipt" per slot
    bits_per_slot: tuple[float, ...]
    total_bits: float
    bank_trace_j: tuple[float, ...]


def combined_mode_controller(
    ambient_trace_j: np.ndarray,
    swipt_link: LinkState,
    activation_threshold_j: float,
    *,
    eta: float = 0.5,
    mode: RelayMode = RelayMode.DECODE_FORWARD,
    slot_duration_s: float = 1.0,
    swipt_enabled: bool = True,
) -> ModeControllerResult:
    """Per-slot choice between ambient-powered relaying and SWIPT.

    While banked plus incoming ambient energy covers the activation
    threshold the relay runs conventionally on harvested crowd energy
    (source sends the first half-slot, the relay forwards with all
    banked energy in the second). Otherwise the slot falls back to
    source-powered SWIPT at the currently optimal time split, and the
    ambient trickle keeps accumulating. With ``swipt_enabled=False`` the
    fallback slots idle, which is the pure non-SWIPT baseline.
    """
    if activation_threshold_j < 0:
        raise InvalidParameterError("activation threshold must be non-negative")
    trace = np.asarray(ambient_trace_j, dtype=float)
    if np.any(trace < 0):
        raise InvalidParameterError("ambient energies must be non-negative")
    swipt_rate = 0.0
    if swipt_enabled:
        _, swipt_rate = optimize_split(
            "ts", swipt_link, eta, mode, frame_duration_s=slot_duration_s
        )
    gamma1 = swipt_link.source_power_w * swipt_link.source_relay_gain / swipt_link.noise_power_w
    modes: list[str] = []
    bits: list[float] = []
    banks: list[float] = []
    bank = 0.0
    for arrival in trace:
        available = bank + float(arrival)
        if available >= activation_threshold_j and available > 0:
            relay_power = available / (slot_duration_s / 2.0)
            gamma2 = (
                relay_power * swipt_link.relay_destination_gain / swipt_link.noise_power_w
            )
            slot_bits = 0.5 * math.log2(1.0 + end_to_end_snr(gamma1, gamma2, mode))
            bank = 0.0
            modes.append("non_swipt")
        else:
            slot_bits = swipt_rate if swipt_enabled else 0.0
            bank = available
            modes.append("swipt" if swipt_enabled else "idle")
        bits.append(slot_bits)
        banks.append(bank)
    return ModeControllerResult(tuple(modes), tuple(bits), float(sum(bits)), tuple(banks))


def save_problem(problem: ScheduleProblem, path: str | Path) -> None:
    Path(path).write_text(problem.to_json())


def load_problem(path: str | Path) -> ScheduleProblem:
    return ScheduleProblem.from_json(Path(path).read_text())
