"""Deterministic seeded discrete-event simulator.

Single global event queue ordered by (time, sequence); one shared radio
channel with collision semantics; per-node free-running clocks; waypoint
mobility; per-agent asynchronous inference epochs. Identical (scenario,
seed) pairs produce bit-identical output.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import inference, operation, protocol
from .config import ScenarioConfig
from .errors import SimulationError
from .model import (
    GaussianBelief,
    MotionModel,
    anchor_belief,
    measurement_variance,
    predict_belief,
    symmetrize,
)
from .protocol import (
    ClockModel,
    Message,
    MsgKind,
    NeighborTable,
    Phase,
    RangeReady,
    RangingSession,
    SendMessage,
    StateSummary,
    TIMEOUT,
    begin_ranging,
    chirp_scheduler,
    neighbor_update,
    ranging_fsm_step,
    sound_channel,
)

EVENT_KINDS = ("tx-start", "tx-end", "timer", "mobility-step", "inference-epoch")


@dataclass(frozen=True)
class SimEvent:
    time: float
    sequence: int
    kind: str
    target: int | None


@dataclass(frozen=True)
class Trajectory:
    """Waypoints (position, arrival time, dwell); linear interpolation between."""

    waypoints: tuple  # of (np.ndarray(3), arrival_s, dwell_s)


def mobility_position(traj: Trajectory, t: float) -> np.ndarray:
    """Position along a waypoint trajectory at time t (clamped at the ends)."""
    wps = traj.waypoints
    if not wps:
        raise SimulationError("trajectory has no waypoints")
    if t <= wps[0][1]:
        return np.array(wps[0][0], dtype=float)
    for (p0, a0, d0), (p1, a1, _d1) in zip(wps, wps[1:]):
        if t <= a0 + d0:
            return np.array(p0, dtype=float)
        if t <= a1:
            frac = (t - (a0 + d0)) / (a1 - (a0 + d0))
            return np.array(p0, dtype=float) + frac * (np.array(p1) - np.array(p0))
    return np.array(wps[-1][0], dtype=float)


def _dist(a, b) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@dataclass
class Transmission:
    src: int
    start: float
    end: float
    src_pos: np.ndarray
    msg: Message


class ChannelState:
    """Shared-channel bookkeeping used for collision arbitration."""

    def __init__(self):
        self.recent: list[Transmission] = []

    def add(self, tx: Transmission) -> None:
        self.recent.append(tx)

    def prune(self, now: float, horizon: float = 0.005) -> None:
        self.recent = [t for t in self.recent if t.end > now - horizon]

    def overlapping(self, tx: Transmission) -> list[Transmission]:
        return [
            t
            for t in self.recent
            if t is not tx and t.start < tx.end and t.end > tx.start
        ]

    def active_at(self, t: float) -> list[Transmission]:
        return [x for x in self.recent if x.start <= t < x.end]


def arbitrate(channel: ChannelState, tx: Transmission, receivers: dict,
              comm_range: float, blocked=frozenset()) -> dict:
    """Per-receiver outcome of a finished transmission.

    receivers maps node id -> position. A reception succeeds iff the receiver
    is in range and exactly one in-range transmission overlapped the frame.
    """
    overlaps = channel.overlapping(tx)
    out = {}
    for nid, pos in receivers.items():
        if nid == tx.src:
            continue
        pair = frozenset((nid, tx.src))
        if pair in blocked or _dist(pos, tx.src_pos) > comm_range:
            out[nid] = "out-of-range"
            continue
        jammed = any(
            frozenset((nid, o.src)) not in blocked
            and _dist(pos, o.src_pos) <= comm_range
            for o in overlaps
        )
        out[nid] = "collided" if jammed else "delivered"
    return out


@dataclass
class RunRecord:
    time_s: float
    node_id: int
    true_pos: np.ndarray
    est_pos: np.ndarray
    cov_trace: float
    n_meas: int
    activated: int
    policy: str


RECORD_HEADER = (
    "time_s,node_id,true_x,true_y,true_z,est_x,est_y,est_z,cov_trace,"
    "n_meas,activated,policy"
)
TRACE_HEADER = "time_s,kind,src,dst,outcome"


def _fmt(v: float) -> str:
    return f"{v:.9f}"


def record_row(r: RunRecord) -> str:
    return ",".join(
        [
            _fmt(r.time_s),
            str(r.node_id),
            _fmt(r.true_pos[0]),
            _fmt(r.true_pos[1]),
            _fmt(r.true_pos[2]),
            _fmt(r.est_pos[0]),
            _fmt(r.est_pos[1]),
            _fmt(r.est_pos[2]),
            _fmt(r.cov_trace),
            str(r.n_meas),
            str(r.activated),
            r.policy,
        ]
    )


@dataclass
class RunResult:
    scenario: str
    seed: int
    duration_s: float
    records: list
    link_counts: dict  # (agent id, neighbor id) -> completed single measurements
    counters: dict
    trace: list | None = None

    def records_csv(self) -> str:
        lines = [RECORD_HEADER]
        lines.extend(record_row(r) for r in self.records)
        return "\n".join(lines) + "\n"

    def trace_csv(self) -> str:
        lines = [TRACE_HEADER]
        for t, kind, src, dst, outcome in self.trace or []:
            lines.append(f"{_fmt(t)},{kind},{src},{'' if dst is None else dst},{outcome}")
        return "\n".join(lines) + "\n"

    def total_measurements(self) -> int:
        return sum(r.n_meas for r in self.records)


class _Node:
    def __init__(self, nid, is_anchor, traj, clock, belief, policy_name):
        self.nid = nid
        self.is_anchor = is_anchor
        self.traj = traj
        self.clock = clock
        self.belief = belief
        self.ls_est = None  # LS agents track a bare position estimate
        self.table = NeighborTable()
        self.session: RangingSession | None = None
        self.timeout_gen = 0
        self.recent_tx: deque = deque()
        self.sense_token = None
        self.policy_name = policy_name
        # epoch bookkeeping (agents only)
        self.period = 0.0
        self.last_epoch_time = 0.0
        self.epoch_t0 = 0.0
        self.in_hold = False
        self.activated = False
        self.csma_attempt = 0
        self.exchange_queue: deque = deque()
        self.current_peer = None
        self.static_pos = (
            np.array(traj.waypoints[0][0], dtype=float)
            if len(traj.waypoints) == 1
            else None
        )
        self.pos_memo = None
        self.collected: dict = {}
        self.link_snapshot: dict = {}
        self.problem = None
        self.proposal = None
        self.warm_alloc: dict = {}

    def busy_for_ranging(self) -> bool:
        return (self.session is not None and self.session.active) or self.in_hold


class Simulation:
    """One scenario execution. All state is owned by the single event loop."""

    def __init__(self, scenario: ScenarioConfig, seed: int | None = None,
                 collect_trace: bool = False):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.par = scenario.parameters
        self.collect_trace = collect_trace
        self.rng = np.random.default_rng(self.seed)
        self.motion = MotionModel(self.par.sigma_x2, self.par.sigma_y2, self.par.sigma_z2)
        self.duration = scenario.duration_s
        self.now = 0.0
        self._seq = itertools.count()
        self._queue: list = []
        self.channel = ChannelState()
        self.records: list[RunRecord] = []
        self.link_counts: dict = {}
        self.trace: list | None = [] if collect_trace else None
        self.counters = {
            "transmissions": 0,
            "delivered": 0,
            "collided": 0,
            "out-of-range": 0,
            "subnet_violations": 0,
            "failed_exchanges": 0,
        }
        self._session_ids = itertools.count(1)
        self._link_excess: dict = {}
        self._holding: set = set()
        self._blocked = frozenset(
            frozenset(p) for p in scenario.link_truth.blocked_pairs
        )
        self._nlos_pairs = frozenset(frozenset(p) for p in scenario.link_truth.nlos_pairs)
        self._build_nodes()

    # -- construction --------------------------------------------------------

    def _build_nodes(self):
        self.nodes: dict[int, _Node] = {}
        self.kinds: dict[int, str] = {}
        par = self.par
        policy = self.scenario.algorithms.activation
        for a in self.scenario.anchors:
            traj = Trajectory(((np.array(a.position, dtype=float), 0.0, 0.0),))
            node = _Node(a.id, True, traj, self._draw_clock(), anchor_belief(a.position),
                         policy)
            self.nodes[a.id] = node
            self.kinds[a.id] = "anchor"
        for a in self.scenario.agents:
            wps = [(np.array(a.initial_position, dtype=float), 0.0, 0.0)]
            for w in a.trajectory:
                wps.append((np.array(w.position, dtype=float), w.arrival_s, w.dwell_s))
            if a.trajectory and a.trajectory[0].arrival_s == 0.0:
                wps = wps[1:]
            traj = Trajectory(tuple(wps))
            mean = np.array(
                a.belief_mean if a.belief_mean is not None else par.default_belief_mean,
                dtype=float,
            )
            ps = par.pos_sigma if a.pos_sigma is None else a.pos_sigma
            vs = par.vel_sigma if a.vel_sigma is None else a.vel_sigma
            cov = np.diag([ps * ps] * 3 + [vs * vs] * 3)
            node = _Node(a.id, False, traj, self._draw_clock(),
                         GaussianBelief(mean, cov), policy)
            node.ls_est = mean[:3].copy()
            self.nodes[a.id] = node
            self.kinds[a.id] = "agent"
        # epoch periods and initial events, in sorted id order for determinism
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if not node.is_anchor:
                jitter = par.epoch_jitter * self.rng.uniform(-1.0, 1.0)
                node.period = par.epoch_period_s * (1.0 + jitter)
                self._schedule(0.0, "inference-epoch", nid, lambda n=node: self._epoch(n))
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            first = chirp_scheduler(self.rng, par.chirp_mean_interval_s)
            if first < self.duration:
                self._schedule(first, "timer", nid, lambda n=node: self._chirp(n))

    def _draw_clock(self) -> ClockModel:
        offset = float(self.rng.uniform(0.0, self.par.clock_offset_max_s))
        drift = float(self.rng.uniform(-self.par.clock_drift_ppm, self.par.clock_drift_ppm))
        return ClockModel(offset=offset, drift_ppm=drift)

    # -- infrastructure ------------------------------------------------------

    def _schedule(self, t: float, kind: str, target, fn) -> SimEvent:
        ev = SimEvent(t, next(self._seq), kind, target)
        heapq.heappush(self._queue, (t, ev.sequence, ev, fn))
        return ev

    def position(self, nid: int, t: float) -> np.ndarray:
        node = self.nodes[nid]
        if node.static_pos is not None:
            return node.static_pos
        memo = node.pos_memo
        if memo is not None and memo[0] == t:
            return memo[1]
        pos = mobility_position(node.traj, t)
        node.pos_memo = (t, pos)
        return pos

    def is_nlos(self, a: int, b: int, t: float) -> bool:
        if frozenset((a, b)) in self._nlos_pairs:
            return True
        boundary = self.scenario.link_truth.nlos_cross_z
        if boundary is not None:
            za = self.position(a, t)[2]
            zb = self.position(b, t)[2]
            if (za - boundary) * (zb - boundary) < 0:
                return True
        return False

    def run(self) -> RunResult:
        grace = self.duration + 1.0
        last = -np.inf
        while self._queue:
            t, _seq, ev, fn = heapq.heappop(self._queue)
            if t > grace:
                break
            if t < last - 1e-12:
                raise SimulationError("event times must be nondecreasing")
            last = t
            self.now = t
            fn()
        return RunResult(
            scenario=self.scenario.name,
            seed=self.seed,
            duration_s=self.duration,
            records=self.records,
            link_counts=dict(sorted(self.link_counts.items())),
            counters=dict(self.counters),
            trace=self.trace,
        )

    # -- channel -------------------------------------------------------------

    def _transmit(self, node: _Node, msg: Message, air: float):
        start = self.now
        msg.tx_ts = node.clock.ticks(start)
        tx = Transmission(node.nid, start, start + air, self.position(node.nid, start), msg)
        self.channel.prune(start)
        self.channel.add(tx)
        self.counters["transmissions"] += 1
        node.recent_tx.append((start, start + air))
        while node.recent_tx and node.recent_tx[0][1] < start - 0.005:
            node.recent_tx.popleft()
        # anyone currently sensing in range hears the channel go busy
        for nid in sorted(self.nodes):
            other = self.nodes[nid]
            if other.sense_token is None or nid == node.nid:
                continue
            pair = frozenset((nid, node.nid))
            if pair in self._blocked:
                continue
            pos = self.position(nid, start)
            if _dist(pos, tx.src_pos) <= self.scenario.link_truth.comm_range_m:
                token = other.sense_token
                other.sense_token = None
                token["on_busy"]()
        self._schedule(tx.end, "tx-end", node.nid, lambda: self._tx_end(tx))
        return tx

    def _channel_busy_for(self, node: _Node) -> bool:
        pos = self.position(node.nid, self.now)
        for tx in self.channel.active_at(self.now):
            if tx.src == node.nid:
                continue
            if frozenset((tx.src, node.nid)) in self._blocked:
                continue
            if _dist(pos, tx.src_pos) <= self.scenario.link_truth.comm_range_m:
                return True
        return False

    def _tx_end(self, tx: Transmission):
        receivers = {
            nid: self.position(nid, tx.end) for nid in sorted(self.nodes) if nid != tx.src
        }
        outcomes = arbitrate(
            self.channel, tx, receivers, self.scenario.link_truth.comm_range_m,
            self._blocked,
        )
        for nid in sorted(outcomes):
            outcome = outcomes[nid]
            node = self.nodes[nid]
            if outcome == "delivered" and any(
                s < tx.end and e > tx.start for s, e in node.recent_tx
            ):
                outcome = "collided"  # half duplex: receiver was transmitting
            self.counters[outcome] += 1
            if self.trace is not None:
                dst = tx.msg.dst
                self.trace.append((tx.end, tx.msg.kind.value, tx.src, dst, f"{outcome}@{nid}"))
            if outcome == "delivered":
                self._deliver(node, tx)

    def _prop_excess(self, a: int, b: int) -> float:
        return self._link_excess.get(frozenset((a, b)), 0.0)

    def _deliver(self, node: _Node, tx: Transmission):
        msg = tx.msg
        dist = _dist(self.position(node.nid, tx.end), tx.src_pos)
        nlos = self.is_nlos(node.nid, tx.src, tx.end)
        xi = sound_channel(nlos, dist, rng=self.rng, noise_sigma=self.par.erc_noise_sigma)
        neighbor_update(node.table, msg, self.now, self.par.neighbor_expiry_s, xi=xi)
        if msg.kind is MsgKind.CHIRP:
            return
        if msg.dst != node.nid:
            return  # overheard unicast frame
        excess = self._prop_excess(node.nid, tx.src)
        rx_phys = tx.start + (dist + excess) / protocol.SPEED_OF_LIGHT
        rx_msg = Message(
            kind=msg.kind, src=msg.src, dst=msg.dst, tx_ts=msg.tx_ts,
            rx_ts=node.clock.ticks(rx_phys), payload=msg.payload,
            data=dict(msg.data), session_id=msg.session_id,
        )
        if node.session is not None:
            session, actions = ranging_fsm_step(node.session, rx_msg, node.nid)
            self._process_fsm_actions(node, actions)
            if session.phase in (Phase.DONE, Phase.FAILED) and not actions:
                node.session = None
            return
        if rx_msg.kind is MsgKind.RANGING_INIT and not node.busy_for_ranging():
            session = RangingSession(
                initiator=rx_msg.src, responder=node.nid,
                session_id=rx_msg.data.get("session_id", 0),
            )
            node.session = session
            _, actions = ranging_fsm_step(session, rx_msg, node.nid)
            self._process_fsm_actions(node, actions)
            self._arm_timeout(node)

    def _process_fsm_actions(self, node: _Node, actions):
        for action in actions:
            if isinstance(action, SendMessage):
                self._schedule(
                    self.now + self.par.turnaround_s, "timer", node.nid,
                    lambda n=node, a=action: self._send_session_message(n, a),
                )
            elif isinstance(action, RangeReady):
                self._on_range_ready(node, action.value)

    def _send_session_message(self, node: _Node, action: SendMessage):
        session = node.session
        if session is None:
            return
        if action.kind is MsgKind.RANGING_REPORT:
            # Ranging noise is applied once, at the responder's computation,
            # so both parties share the identical measured value.
            value = action.data["range"] + float(self.rng.normal(0.0, self.par.los_sigma_m))
            action = SendMessage(action.kind, action.dst, {"range": value}, None)
        msg = Message(
            kind=action.kind, src=node.nid, dst=action.dst,
            payload=self._state_summary(node), data=dict(action.data),
            session_id=session.session_id,
        )
        tx = self._transmit(node, msg, self.par.msg_air_s)
        if action.ts_slot is not None:
            session.record_tx(action.ts_slot, msg.tx_ts)
        if action.kind is not MsgKind.RANGING_REPORT:
            self._arm_timeout(node)
        elif session.phase is Phase.DONE:
            node.session = None

    def _arm_timeout(self, node: _Node):
        node.timeout_gen += 1
        gen = node.timeout_gen
        self._schedule(
            self.now + self.par.ranging_timeout_s, "timer", node.nid,
            lambda n=node, g=gen: self._session_timeout(n, g),
        )

    def _session_timeout(self, node: _Node, gen: int):
        if node.timeout_gen != gen or node.session is None or not node.session.active:
            return
        ranging_fsm_step(node.session, TIMEOUT, node.nid)
        node.session = None
        self.counters["failed_exchanges"] += 1
        if node.in_hold:
            # drop remaining repeats with the unresponsive neighbor
            failed = node.current_peer
            if failed is not None:
                node.exchange_queue = deque(
                    x for x in node.exchange_queue if x != failed
                )
            self._schedule(
                self.now + self.par.exchange_gap_s, "timer", node.nid,
                lambda n=node: self._next_exchange(n),
            )

    def _state_summary(self, node: _Node) -> StateSummary:
        if node.is_anchor or node.ls_est is None:
            return StateSummary(node.belief.mean[:3].copy(), np.array(node.belief.covariance))
        if self.scenario.algorithms.inference == "LS":
            cov = np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
            return StateSummary(node.ls_est.copy(), cov)
        return StateSummary(node.belief.mean[:3].copy(), np.array(node.belief.covariance))

    # -- chirps --------------------------------------------------------------

    def _chirp(self, node: _Node):
        if node.busy_for_ranging():
            nxt = self.now + 0.1 * self.par.chirp_mean_interval_s
        else:
            msg = Message(
                kind=MsgKind.CHIRP, src=node.nid, dst=None,
                payload=self._state_summary(node),
            )
            self._transmit(node, msg, self.par.chirp_air_s)
            nxt = self.now + chirp_scheduler(self.rng, self.par.chirp_mean_interval_s)
        if nxt < self.duration:
            self._schedule(nxt, "timer", node.nid, lambda n=node: self._chirp(n))

    # -- inference epochs ----------------------------------------------------

    def _epoch(self, agent: _Node):
        t0 = self.now
        if t0 >= self.duration:
            return
        agent.epoch_t0 = t0
        dt = t0 - agent.last_epoch_time
        agent.last_epoch_time = t0
        agent.activated = False
        agent.csma_attempt = 0
        agent.collected = {}
        agent.exchange_queue = deque()
        agent.current_peer = None
        if self.scenario.algorithms.inference == "SPBP":
            agent.belief = predict_belief(agent.belief, self.motion, dt)
        agent.table.purge(t0, self.par.neighbor_expiry_s)
        problem, proposal = self._prioritize(agent)
        agent.problem = problem
        agent.proposal = proposal
        if proposal is None or proposal.total == 0:
            self._finalize(agent)
            return
        activation = self.scenario.algorithms.activation
        if activation == "ALOHA":
            policy = protocol.AlohaPolicy(self.par.aloha_mean_delay_s)
            delay = policy.attempt_delay(self.rng)
            self._schedule(t0 + delay, "timer", agent.nid,
                           lambda a=agent: self._begin_hold(a))
        elif activation == "CSMA":
            policy = protocol.CsmaPolicy(
                self.par.csma_sense_s, self.par.csma_backoff_base_s,
                self.par.csma_max_attempts,
            )
            self._start_sense(
                agent, policy.sense_window(self.rng),
                on_idle=lambda a=agent: self._begin_hold(a),
                on_busy=lambda a=agent, p=policy: self._csma_busy(a, p),
            )
        elif activation == "HTNA":
            policy = protocol.HtnaPolicy(
                self.par.t_m_s, self.par.htna_window_lo, self.par.htna_window_hi
            )
            self._start_sense(
                agent, policy.sense_window(self.rng),
                on_idle=lambda a=agent: self._htna_gate(a),
                on_busy=lambda a=agent: self._finalize(a),
            )
        else:  # pragma: no cover - config enforces the closed set
            raise SimulationError(f"unknown activation {activation}")

    def _eligible_neighbors(self, agent: _Node) -> list:
        out = []
        for nid in agent.table.neighbors():
            if not self.par.allow_agent_measurements and self.kinds.get(nid) != "anchor":
                continue
            out.append(nid)
        return out

    def _own_position_cov(self, agent: _Node) -> tuple[np.ndarray, np.ndarray]:
        if self.scenario.algorithms.inference == "LS":
            return agent.ls_est.copy(), np.eye(3)
        mu_p, c_p = inference.marginalize_position(agent.belief)
        return mu_p, c_p

    def _prioritize(self, agent: _Node):
        neighbors = self._eligible_neighbors(agent)
        mu_p, c_p = self._own_position_cov(agent)
        links = []
        for nid in neighbors:
            entry = agent.table.entries[nid]
            try:
                u = operation.unit_direction(mu_p, entry.mu_p)
            except Exception:
                continue
            links.append(operation.LinkInfo(nid, u, entry.xi, entry.cov[:3, :3]))
        if not links:
            return None, None
        agent.link_snapshot = {
            l.neighbor: (l.xi, agent.table.entries[l.neighbor].mu_p.copy(),
                         np.array(agent.table.entries[l.neighbor].cov))
            for l in links
        }
        if self.scenario.algorithms.prioritization == "UNIFORM":
            problem = operation.AllocationProblem(c_p, tuple(links), self.par.m_per_neighbor)
            pick = int(self.rng.integers(len(links)))
            m = np.zeros(len(links), dtype=int)
            m[pick] = self.par.m_per_neighbor
            obj = float(np.trace(operation.predicted_covariance(problem, m)))
            return problem, operation.AllocationResult(m, obj)
        problem = operation.AllocationProblem(c_p, tuple(links), self.par.budget)
        warm = np.array(
            [agent.warm_alloc.get(l.neighbor, self.par.budget / len(links)) for l in links]
        )
        result = operation.cpnp_allocate(
            problem, operation.SolverOptions(max_iters=300, tol=1e-6, warm_start=warm)
        )
        agent.warm_alloc = {
            l.neighbor: float(v) for l, v in zip(links, result.relaxed_m)
        }
        return problem, result

    def _start_sense(self, agent: _Node, window: float, on_idle, on_busy):
        if self._channel_busy_for(agent):
            on_busy()
            return
        token = {"on_busy": on_busy}
        agent.sense_token = token
        self._schedule(
            self.now + window, "timer", agent.nid,
            lambda a=agent, tok=token, cb=on_idle: self._sense_complete(a, tok, cb),
        )

    def _sense_complete(self, agent: _Node, token, on_idle):
        if agent.sense_token is not token:
            return  # was cancelled by a busy channel
        agent.sense_token = None
        on_idle()

    def _csma_busy(self, agent: _Node, policy: protocol.CsmaPolicy):
        delay = policy.backoff(agent.csma_attempt, self.rng)
        agent.csma_attempt += 1
        if delay is None:
            self._finalize(agent)
            return
        self._schedule(
            self.now + delay, "timer", agent.nid,
            lambda a=agent, p=policy: self._start_sense(
                a, p.sense_window(self.rng),
                on_idle=lambda: self._begin_hold(a),
                on_busy=lambda: self._csma_busy(a, p),
            ),
        )

    def _htna_gate(self, agent: _Node):
        result = agent.proposal
        dt_j = self.par.t_m_s * result.total
        covs = [np.array(agent.belief.covariance)]
        for nid in agent.table.neighbors():
            if self.kinds.get(nid) == "agent":
                covs.append(np.array(agent.table.entries[nid].cov))
        inputs = operation.ActivationInputs(result, tuple(covs), self.motion, dt_j)
        if operation.htna_decide(inputs, agent.problem):
            self._begin_hold(agent)
        else:
            self._finalize(agent)

    def _begin_hold(self, agent: _Node):
        if agent.session is not None and agent.session.active:
            # responding to someone else right now; skip this epoch
            self._finalize(agent)
            return
        agent.in_hold = True
        agent.activated = True
        pos = self.position(agent.nid, self.now)
        for other in self._holding:
            opos = self.position(other, self.now)
            if _dist(pos, opos) <= self.scenario.link_truth.comm_range_m:
                self.counters["subnet_violations"] += 1
                break
        self._holding.add(agent.nid)
        queue = deque()
        for link, m in zip(agent.problem.links, agent.proposal.m):
            for _ in range(int(m)):
                queue.append(link.neighbor)
        agent.exchange_queue = queue
        self._next_exchange(agent)

    def _next_exchange(self, agent: _Node):
        if not agent.exchange_queue:
            self._finalize(agent)
            return
        nbr = agent.exchange_queue.popleft()
        agent.current_peer = nbr
        pair = frozenset((agent.nid, nbr))
        if self.is_nlos(agent.nid, nbr, self.now):
            self._link_excess[pair] = float(
                self.rng.exponential(self.par.nlos_bias_mean_m)
            )
        else:
            self._link_excess[pair] = 0.0
        session = RangingSession(
            initiator=agent.nid, responder=nbr, session_id=next(self._session_ids)
        )
        agent.session = session
        actions = begin_ranging(session)
        self._process_fsm_actions(agent, actions)
        self._arm_timeout(agent)

    def _on_range_ready(self, node: _Node, value: float):
        if not node.in_hold:
            return  # responder side; only the initiator collects
        node.timeout_gen += 1  # disarm pending timeout
        nbr = node.current_peer
        node.collected.setdefault(nbr, []).append(value)
        node.session = None
        self._schedule(
            self.now + self.par.exchange_gap_s, "timer", node.nid,
            lambda n=node: self._next_exchange(n),
        )

    def _finalize(self, agent: _Node):
        agent.in_hold = False
        self._holding.discard(agent.nid)
        entries = []
        for nbr in sorted(agent.collected):
            ranges = agent.collected[nbr]
            if not ranges:
                continue
            if nbr in agent.table.entries:
                e = agent.table.entries[nbr]
                xi, mu_p, cov = e.xi, e.mu_p, e.cov
            else:
                xi, mu_p, cov = agent.link_snapshot[nbr]
            count = len(ranges)
            entries.append(
                inference.MeasurementEntry(
                    neighbor=nbr,
                    z=float(np.mean(ranges)),
                    variance=measurement_variance(count, xi),
                    mu_p=mu_p,
                    c_p=cov[:3, :3],
                )
            )
            key = (agent.nid, nbr)
            self.link_counts[key] = self.link_counts.get(key, 0) + count
        n_meas = sum(len(v) for v in agent.collected.values())
        if self.scenario.algorithms.inference == "SPBP":
            if entries:
                agent.belief = inference.spbp_update(
                    agent.belief, inference.MeasurementBatch(tuple(entries))
                )
            est = agent.belief.mean[:3]
            cov_trace = float(np.trace(agent.belief.covariance[:3, :3]))
        else:
            if entries:
                try:
                    agent.ls_est = inference.ls_estimate(
                        agent.ls_est, inference.MeasurementBatch(tuple(entries))
                    )
                except Exception:
                    pass  # divergence: keep the previous estimate
            est = agent.ls_est
            cov_trace = float("nan")
        truth = self.position(agent.nid, agent.epoch_t0)
        self.records.append(
            RunRecord(
                time_s=agent.epoch_t0,
                node_id=agent.nid,
                true_pos=truth,
                est_pos=np.array(est, dtype=float),
                cov_trace=cov_trace,
                n_meas=n_meas,
                activated=1 if agent.activated else 0,
                policy=agent.policy_name,
            )
        )
        nxt = max(agent.epoch_t0 + agent.period, self.now)
        if nxt < self.duration:
            self._schedule(nxt, "inference-epoch", agent.nid,
                           lambda a=agent: self._epoch(a))


def run(scenario: ScenarioConfig, seed: int | None = None,
        collect_trace: bool = False) -> RunResult:
    """Execute one simulation; identical (scenario, seed) gives identical output."""
    return Simulation(scenario, seed=seed, collect_trace=collect_trace).run()
