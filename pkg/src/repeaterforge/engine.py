"""Discrete-event simulation of a sequential repeater chain.

The chain is a path of end nodes, at most one repeater, and heralding
stations in between. Elementary links are generated by sampling the number
of attempts from the analytical link models rather than simulating every
attempt. The repeater first generates entanglement on its longer link, keeps
that half in memory, then generates the shorter link and swaps as soon as
both exist. If the second link takes longer than the cut-off time, the stored
half is discarded and the longer link is regenerated.

Pauli corrections are not applied on the nodes. Each delivered pair records
the Bell frame it should be in, and the correction is applied afterwards.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence

import numpy as np

from .hardware import (
    HardwareParams,
    PlatformKind,
    QubitRegister,
    apply_induced_dephasing,
    bell_state_measurement,
    decohere_idle,
    move_duration,
    move_to_memory,
)
from .linkmodels import (
    DetectorMode,
    DoubleClickParams,
    LinkOutcome,
    SingleClickParams,
    double_click_outcome,
    draw_link,
    single_click_outcome,
)
from .qstate import BellIndex, DensityMatrix, avg_teleportation_fidelity, pauli_correct
from .targetmetric import vbqc_min_fidelity
from .timewindows import (
    CoincidenceFactors,
    WindowConfig,
    coincidence_factors,
    shape_from_half_lives,
    visibility,
)

SPEED_OF_LIGHT_KM_S = 299_792.458


# ---------------------------------------------------------------- topology


@dataclass(frozen=True)
class Node:
    name: str
    role: str  # "end", "repeater" or "station"

    def __post_init__(self):
        if self.role not in ("end", "repeater", "station"):
            raise ValueError(f"node {self.name}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Segment:
    start: str
    end: str
    length_km: float
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError(f"segment {self.start}-{self.end}: negative length")
        if not self.attenuation_db_per_km > 0:
            raise ValueError(f"segment {self.start}-{self.end}: attenuation must be positive")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km


@dataclass(frozen=True)
class ElementaryLink:
    """Two quantum nodes joined through one heralding station."""

    left: str
    right: str
    station: str
    left_km: float
    right_km: float
    left_loss_db: float
    right_loss_db: float

    @property
    def name(self) -> str:
        return f"{self.left}-{self.right}"

    @property
    def length_km(self) -> float:
        return self.left_km + self.right_km


@dataclass(frozen=True)
class NetworkTopology:
    """Nodes and segments listed in path order."""

    nodes: tuple[Node, ...]
    segments: tuple[Segment, ...]
    refractive_index: float = 1.44

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.refractive_index < 1:
            raise ValueError("refractive index must be at least 1")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        if len(self.segments) != len(self.nodes) - 1:
            raise ValueError("segments must connect consecutive nodes")
        for k, seg in enumerate(self.segments):
            if (seg.start, seg.end) != (names[k], names[k + 1]):
                raise ValueError(f"segment {k} must run {names[k]} -> {names[k + 1]}")
        if self.nodes[0].role != "end" or self.nodes[-1].role != "end":
            raise ValueError("path must start and end with end nodes")
        if any(n.role == "end" for n in self.nodes[1:-1]):
            raise ValueError("end nodes may only sit at the path ends")
        if sum(n.role == "repeater" for n in self.nodes) > 1:
            raise ValueError("at most one repeater is supported")
        self.links  # validates station placement

    @property
    def speed_km_s(self) -> float:
        return SPEED_OF_LIGHT_KM_S / self.refractive_index

    def delay(self, km: float) -> float:
        return km / self.speed_km_s

    @property
    def total_km(self) -> float:
        return sum(s.length_km for s in self.segments)

    @property
    def links(self) -> tuple[ElementaryLink, ...]:
        quantum = [k for k, n in enumerate(self.nodes) if n.role != "station"]
        out = []
        for lo, hi in zip(quantum, quantum[1:]):
            stations = [k for k in range(lo + 1, hi) if self.nodes[k].role == "station"]
            if len(stations) != 1:
                raise ValueError(
                    f"link {self.nodes[lo].name}-{self.nodes[hi].name} needs exactly one heralding station"
                )
            s = stations[0]
            left = self.segments[lo:s]
            right = self.segments[s:hi]
            out.append(
                ElementaryLink(
                    left=self.nodes[lo].name,
                    right=self.nodes[hi].name,
                    station=self.nodes[s].name,
                    left_km=sum(x.length_km for x in left),
                    right_km=sum(x.length_km for x in right),
                    left_loss_db=sum(x.loss_db for x in left),
                    right_loss_db=sum(x.loss_db for x in right),
                )
            )
        return tuple(out)

    def distance_km(self, a: str, b: str) -> float:
        names = [n.name for n in self.nodes]
        i, j = sorted((names.index(a), names.index(b)))
        return sum(s.length_km for s in self.segments[i:j])


# ---------------------------------------------------------------- protocol


@dataclass(frozen=True)
class ProtocolConfig:
    scheme: str = "double_click"  # or "single_click"
    cutoff_time: float = math.inf
    n_pairs: int = 100
    seed: int = 0
    bright_state_parameter: float = 0.1  # single click only
    coincidence_window: Optional[float] = None  # trapped-ion double click only
    detector_mode: DetectorMode = DetectorMode.NNR
    move_end_node: bool = False  # color centers: end node stores its half in the carbon
    time_horizon: float = math.inf

    def __post_init__(self):
        if self.scheme not in ("double_click", "single_click"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.cutoff_time > 0:
            raise ValueError("cut-off time must be positive")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be positive")
        if not 0 < self.bright_state_parameter < 1:
            raise ValueError("bright-state parameter must lie in (0, 1)")
        if self.coincidence_window is not None and self.coincidence_window < 0:
            raise ValueError("coincidence window must be nonnegative")
        object.__setattr__(self, "detector_mode", DetectorMode(self.detector_mode))


@dataclass(frozen=True)
class LinkPhysics:
    link: ElementaryLink
    outcome: LinkOutcome
    attempt_duration: float
    herald_delay: float
    alpha: tuple[float, float]  # bright-state parameter per side (single click)


def arm_detection_probability(params: HardwareParams, loss_db: float) -> float:
    return params["p_det"] * 10 ** (-loss_db / 10)


def _ti_visibility_and_coincidence(params: HardwareParams, tau: Optional[float]):
    shape = shape_from_half_lives(params["hl_wavefunction"], params["hl_emission"])
    T = params["detection_window"]
    ref = params["reference_coincidence_window"]
    tau = ref if tau is None else min(tau, T)
    if tau == 0:
        raise ValueError("a zero coincidence window never heralds")
    v = params["visibility"] * visibility(shape, WindowConfig(T, tau)) / visibility(shape, WindowConfig(T, ref))
    return min(1.0, v), coincidence_factors(shape, WindowConfig(T, tau))


def _abstract_coincidence(params: HardwareParams) -> Optional[CoincidenceFactors]:
    keys = ("p_ph_ph", "p_ph_dc", "p_dc_dc")
    if all(params.get(k) is not None for k in keys):
        return CoincidenceFactors(*(params[k] for k in keys))
    return None


def build_link_physics(
    topology: NetworkTopology, params: HardwareParams, protocol: ProtocolConfig
) -> dict[str, LinkPhysics]:
    """Success probability, branch states and timing for every link."""
    links = topology.links
    p_arm = {
        link.name: (
            arm_detection_probability(params, link.left_loss_db),
            arm_detection_probability(params, link.right_loss_db),
        )
        for link in links
    }
    # single click: alpha * p_arm is equal on every arm of the network
    p_min = min(min(v) for v in p_arm.values())
    emission = params["emission_duration"]
    if params.platform is PlatformKind.TRAPPED_ION:
        emission += params["init_duration"]
    out = {}
    for link in links:
        pa, pb = p_arm[link.name]
        V = params["visibility"]
        coincidence = None
        if params.platform is PlatformKind.TRAPPED_ION:
            V, coincidence = _ti_visibility_and_coincidence(params, protocol.coincidence_window)
        elif params.platform is PlatformKind.ABSTRACT:
            coincidence = _abstract_coincidence(params)
        alpha = (0.0, 0.0)
        if protocol.scheme == "double_click":
            outcome = double_click_outcome(
                DoubleClickParams(
                    p_A=pa,
                    p_B=pb,
                    V=V,
                    p_dc=params["p_dc"],
                    F_em_A=params["emission_fidelity"],
                    F_em_B=params["emission_fidelity"],
                    detector_mode=protocol.detector_mode,
                    coincidence=coincidence,
                )
            )
        else:
            a = protocol.bright_state_parameter
            alpha = (a * p_min / pa if pa > 0 else a, a * p_min / pb if pb > 0 else a)
            outcome = single_click_outcome(
                SingleClickParams(
                    alpha_A=alpha[0],
                    alpha_B=alpha[1],
                    p_A=pa,
                    p_B=pb,
                    V=V,
                    p_dc=params["p_dc"],
                    p_dexc=params.get("p_dexc", 0.0),
                    sigma_phase=params.get("sigma_phase", 0.0),
                    detector_mode=protocol.detector_mode,
                )
            )
        if not outcome.success_prob > 0:
            raise ValueError(f"link {link.name} never succeeds")
        farthest = topology.delay(max(link.left_km, link.right_km))
        out[link.name] = LinkPhysics(
            link=link,
            outcome=outcome,
            attempt_duration=emission + farthest,
            herald_delay=farthest,
            alpha=alpha,
        )
    return out


# ---------------------------------------------------------------- kernel


@dataclass(order=True)
class Event:
    time: float
    sequence: int
    target: str = field(compare=False)
    kind: str = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class EventQueue:
    """Priority queue ordered by (time, insertion sequence)."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0

    def schedule(self, time: float, target: str, kind: str, **payload) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule {kind} in the past")
        ev = Event(time, self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev

    def __len__(self) -> int:
        return len(self._heap)


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class DeliveryRecord:
    pair_index: int
    completion_time: float
    state: DensityMatrix  # after Pauli correction
    frame: BellIndex
    attempts: dict[str, int]  # per link, including discarded rounds
    discards: int
    storage_time: float  # time the first link waited in memory before the swap

    def to_json(self) -> dict:
        return {
            "pair_index": self.pair_index,
            "completion_time": self.completion_time,
            "state": self.state.to_json(),
            "frame": list(self.frame),
            "attempts": dict(self.attempts),
            "discards": self.discards,
            "storage_time": self.storage_time,
        }


@dataclass
class _Pair:
    """An entangled pair in flight: qubit k is held by nodes[k]."""

    state: DensityMatrix
    frame: BellIndex
    nodes: tuple[str, str]
    roles: list[str]
    clock: list[float]  # time up to which each qubit's idle noise is applied
    rates: list[float]  # collective-dephasing sample of the holding trap


# ---------------------------------------------------------------- simulation


class Simulation:
    def __init__(
        self,
        topology: NetworkTopology,
        hardware: HardwareParams,
        protocol: ProtocolConfig,
        trace: Optional[IO[str]] = None,
    ):
        self.topology = topology
        self.hardware = hardware
        self.protocol = protocol
        self.physics = build_link_physics(topology, hardware, protocol)
        self.trace_stream = trace
        self.trace: list[dict] = []
        link_seed, circuit_seed = np.random.SeedSequence(protocol.seed).spawn(2)
        self.link_rng = np.random.default_rng(link_seed)
        self.circuit_rng = np.random.default_rng(circuit_seed)
        self.queue = EventQueue()
        names = [n.name for n in topology.nodes if n.role != "station"]
        self.registers = {n: QubitRegister(hardware.platform) for n in names}
        self.end_a, self.end_b = names[0], names[-1]
        self.repeater = names[1] if len(names) == 3 else None
        self.records: list[DeliveryRecord] = []
        links = topology.links
        if self.repeater is None:
            self.long = self.short = links[0]
        else:
            # ties go to the link towards the responding end node
            self.long, self.short = (links[1], links[0]) if links[1].length_km >= links[0].length_km else links
        # per pair index: the next pair starts before the previous one is delivered
        self._link_names = [link.name for link in links]
        self._attempts: dict[int, dict[str, int]] = {}
        self._discards: dict[int, int] = {}
        self._stored: Optional[_Pair] = None
        self._stored_at = 0.0
        self._pending: dict[int, dict] = {}

    # ---- helpers

    def _log(self, node: str, kind: str, **info) -> None:
        row = {"t": self.queue.now, "node": node, "event": kind, **info}
        self.trace.append(row)
        if self.trace_stream is not None:
            self.trace_stream.write(json.dumps(row, sort_keys=True) + "\n")

    def _age(self, pair: _Pair, k: int, until: float) -> None:
        elapsed = until - pair.clock[k]
        if elapsed < 0:
            raise RuntimeError("qubit clock ran backwards")
        pair.state = decohere_idle(pair.state, k, elapsed, self.hardware, pair.roles[k], pair.rates[k])
        pair.clock[k] = until

    def _generate(self, physics: LinkPhysics, start: float, node: str) -> tuple[int, float, _Pair]:
        """Handshake plus sampled attempts; returns (attempts, known_at, pair)."""
        handshake = 2 * self.topology.delay(physics.link.length_km)
        sample = draw_link(physics.outcome, physics.attempt_duration, self.link_rng)
        born = start + handshake + sample.delay
        pair = _Pair(
            state=sample.state,
            frame=sample.bell_index,
            nodes=(physics.link.left, physics.link.right),
            roles=["communication", "communication"],
            clock=[born, born],
            rates=[self.registers[n].trap_rate for n in (physics.link.left, physics.link.right)],
        )
        return sample.n_attempts, born + physics.herald_delay, pair

    def _count(self, idx: int, link: str, n: int) -> None:
        counts = self._attempts.setdefault(idx, {k: 0 for k in self._link_names})
        counts[link] += n

    def _reset_traps(self, *nodes: str) -> None:
        for n in nodes:
            self.registers[n].reset_trap(self.circuit_rng)

    # ---- run

    def run(self) -> list[DeliveryRecord]:
        if self.repeater is not None and self.protocol.cutoff_time < self._fastest_short_link():
            if math.isinf(self.protocol.time_horizon):
                raise ValueError("cut-off is shorter than the fastest possible second link")
        # request, confirmation and activation of the repeater
        self.queue.schedule(0.0, self.end_a, "request")
        handlers = {
            "request": self._on_request,
            "start_link": self._on_start_link,
            "first_link": self._on_first_link,
            "second_link": self._on_second_link,
            "cutoff": self._on_cutoff,
            "outcome": self._on_outcome,
            "notice": self._on_notice,
        }
        while self.queue and len(self.records) < self.protocol.n_pairs:
            ev = self.queue.pop()
            if ev.time > self.protocol.time_horizon:
                break
            handlers[ev.kind](ev)
        return self.records

    def _fastest_short_link(self) -> float:
        ph = self.physics[self.short.name]
        setup = move_duration(self.hardware) if self.hardware.platform is PlatformKind.COLOR_CENTER else 0.0
        return setup + 2 * self.topology.delay(self.short.length_km) + ph.attempt_duration + ph.herald_delay

    def _on_request(self, ev: Event) -> None:
        self._log(ev.target, "request")
        rtt = 2 * self.topology.delay(self.topology.total_km)
        if self.repeater is None:
            self.queue.schedule(rtt, self.end_a, "start_link", pair_index=0)
        else:
            activate = rtt / 2 + self.topology.delay(self.topology.distance_km(self.end_b, self.repeater))
            self.queue.schedule(activate, self.repeater, "start_link", pair_index=0)

    def _on_start_link(self, ev: Event) -> None:
        idx = ev.payload["pair_index"]
        link = self.long
        self._log(ev.target, "start_link", link=link.name, pair=idx)
        self._reset_traps(link.left, link.right)
        n, known, pair = self._generate(self.physics[link.name], ev.time, ev.target)
        self._count(idx, link.name, n)
        self.queue.schedule(known, ev.target, "first_link", pair_index=idx, pair=pair, attempts=n)

    def _on_first_link(self, ev: Event) -> None:
        idx, pair = ev.payload["pair_index"], ev.payload["pair"]
        self._log(ev.target, "link_ready", link=self.long.name, pair=idx, attempts=ev.payload["attempts"])
        if self.repeater is None:
            for k in (0, 1):
                self._age(pair, k, ev.time)
            self._deliver(idx, pair, ev.time, storage=0.0)
            if len(self.records) < self.protocol.n_pairs:
                self.queue.schedule(ev.time, self.end_a, "start_link", pair_index=idx + 1)
            return
        hw = self.hardware
        local = pair.nodes.index(self.repeater)
        end = 1 - local
        setup = 0.0
        if hw.platform is PlatformKind.COLOR_CENTER:
            self._age(pair, local, ev.time)
            pair.state, setup = move_to_memory(pair.state, local, hw)
            pair.roles[local] = "memory"
            pair.clock[local] = ev.time + setup
            self._log(self.repeater, "move_to_memory", pair=idx, duration=setup)
            if self.protocol.move_end_node:
                arrival = pair.clock[end] + self.physics[self.long.name].herald_delay
                self._age(pair, end, arrival)
                pair.state, d = move_to_memory(pair.state, end, hw)
                pair.roles[end] = "memory"
                pair.clock[end] = arrival + d
                self._log(pair.nodes[end], "move_to_memory", pair=idx, duration=d)
        self._stored, self._stored_at = pair, ev.time
        deadline = ev.time + self.protocol.cutoff_time
        start = ev.time + setup
        physics = self.physics[self.short.name]
        self._reset_traps(self.short.left if self.short.left != self.repeater else self.short.right)
        n, known, second = self._generate(physics, start, self.repeater)
        if known <= deadline:
            self._count(idx, self.short.name, n)
            self.queue.schedule(known, self.repeater, "second_link", pair_index=idx, pair=second, attempts=n)
        else:
            first_try = start + 2 * self.topology.delay(self.short.length_km)
            made = max(0, min(n, math.floor((deadline - first_try) / physics.attempt_duration)))
            self._count(idx, self.short.name, made)
            self.queue.schedule(deadline, self.repeater, "cutoff", pair_index=idx)

    def _on_cutoff(self, ev: Event) -> None:
        idx = ev.payload["pair_index"]
        self._discards[idx] = self._discards.get(idx, 0) + 1
        self._stored = None
        self._log(self.repeater, "discard", pair=idx)
        far = self.long.left if self.long.left != self.repeater else self.long.right
        self.queue.schedule(
            ev.time + self.topology.delay(self.long.length_km), far, "notice", pair_index=idx
        )
        self.queue.schedule(ev.time, self.repeater, "start_link", pair_index=idx)

    def _on_notice(self, ev: Event) -> None:
        self._log(ev.target, "discard_notice", pair=ev.payload["pair_index"])

    def _on_second_link(self, ev: Event) -> None:
        idx, second = ev.payload["pair_index"], ev.payload["pair"]
        self._log(ev.target, "link_ready", link=self.short.name, pair=idx, attempts=ev.payload["attempts"])
        first, self._stored = self._stored, None
        hw = self.hardware
        # orient both pairs so the swap acts on left[1] and right[0]
        left, right = (second, first) if second.nodes[1] == self.repeater else (first, second)
        r_first = left if left is first else right
        k_mem = r_first.nodes.index(self.repeater)
        if hw.platform is PlatformKind.COLOR_CENTER:
            if self.protocol.scheme == "double_click":
                alpha, repeats = 0.5, 2
            else:
                ph = self.physics[self.short.name]
                alpha = ph.alpha[0] if self.short.left == self.repeater else ph.alpha[1]
                repeats = 1
            r_first.state = apply_induced_dephasing(r_first.state, k_mem, ev.payload["attempts"], alpha, hw, repeats)
        self._age(left, 1, ev.time)
        self._age(right, 0, ev.time)
        # the freshly generated half sits in the communication qubit (circuit qubit 0)
        result = bell_state_measurement(
            left.state, left.frame, right.state, right.frame, hw, self.circuit_rng, first_left=left is second
        )
        done = ev.time + result.duration
        self._log(self.repeater, "swap", pair=idx, bits=list(result.bits), duration=result.duration)
        joined = _Pair(
            state=result.state,
            frame=result.frame,
            nodes=(left.nodes[0], right.nodes[1]),
            roles=[left.roles[0], right.roles[1]],
            clock=[left.clock[0], right.clock[1]],
            rates=[left.rates[0], right.rates[1]],
        )
        self._pending[idx] = {"pair": joined, "arrived": {}, "storage": ev.time - self._stored_at}
        for k, node in enumerate(joined.nodes):
            arrival = done + self.topology.delay(self.topology.distance_km(self.repeater, node))
            self.queue.schedule(arrival, node, "outcome", pair_index=idx, qubit=k)
        if idx + 1 < self.protocol.n_pairs:
            self.queue.schedule(done, self.repeater, "start_link", pair_index=idx + 1)

    def _on_outcome(self, ev: Event) -> None:
        idx, k = ev.payload["pair_index"], ev.payload["qubit"]
        entry = self._pending[idx]
        self._log(ev.target, "outcome", pair=idx)
        self._age(entry["pair"], k, ev.time)
        entry["arrived"][k] = ev.time
        if len(entry["arrived"]) == 2:
            del self._pending[idx]
            self._deliver(idx, entry["pair"], ev.time, entry["storage"])

    def _deliver(self, idx: int, pair: _Pair, now: float, storage: float) -> None:
        corrected = pauli_correct(pair.state, pair.frame, qubit=0)
        self._log(pair.nodes[0], "delivered", pair=idx)
        self.records.append(
            DeliveryRecord(
                pair_index=idx,
                completion_time=now,
                state=corrected,
                frame=pair.frame,
                attempts=self._attempts.pop(idx, {k: 0 for k in self._link_names}),
                discards=self._discards.pop(idx, 0),
                storage_time=storage,
            )
        )


def run_simulation(
    topology: NetworkTopology,
    hardware: HardwareParams,
    protocol: ProtocolConfig,
    trace: Optional[IO[str]] = None,
) -> list[DeliveryRecord]:
    return Simulation(topology, hardware, protocol, trace).run()


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    n: int
    rate: float
    sem_rate: float
    fidelity: float  # average teleportation fidelity
    sem_fidelity: float
    required_fidelity: Optional[float] = None  # fidelity the measured rate needs for the server

    def to_json(self) -> dict:
        return dict(self.__dict__)


def compute_metrics(records: Sequence[DeliveryRecord], server_T: Optional[float] = None) -> Metrics:
    """Rate, average teleportation fidelity and their standard errors.

    The rate SEM follows from the spread of inter-delivery times. With
    ``server_T`` the fidelity the server needs at the measured rate is
    reported as well; server memory noise is not folded into the fidelity.
    """
    if len(records) < 2:
        raise ValueError("at least two deliveries are needed")
    times = np.array([r.completion_time for r in records])
    gaps = np.diff(np.concatenate([[0.0], times]))
    n = len(records)
    mean_gap = times[-1] / n
    sem_gap = gaps.std(ddof=1) / math.sqrt(n)
    fids = np.array([avg_teleportation_fidelity(r.state) for r in records])
    rate = 1 / mean_gap
    required = vbqc_min_fidelity(rate, server_T) if server_T is not None else None
    return Metrics(
        n=n,
        rate=float(rate),
        sem_rate=float(sem_gap / mean_gap**2),
        fidelity=float(fids.mean()),
        sem_fidelity=float(fids.std(ddof=1) / math.sqrt(n)),
        required_fidelity=required,
    )
