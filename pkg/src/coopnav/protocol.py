"""Simulated radio firmware behaviors.

Covers the four-message symmetric double-sided two-way ranging exchange,
chirp-based neighbor discovery, channel sensing, channel sounding, and the
three channel-access policies. State machines here are pure with respect to
the channel: the simulation kernel stamps timestamps and moves messages.

Ranging exchange layout (initiator I, responder R):

    I --init-->  R     t1 = I tx, t2 = R rx
    I <--resp--  R     t3 = R tx (carries t2), t4 = I rx
    I --final--> R     t5 = I tx (carries t1, t4), t6 = R rx
    I <-report-- R     carries the range computed by R from t1..t6

The range uses only the six timestamps of the first three messages, so both
sides end up with the identical value; the report just shares it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, RangingError
from .model import ERC_MAX, ERC_MIN

SPEED_OF_LIGHT = 299792458.0  # m/s

# DW1000-style timestamp granularity: 1 / (128 * 499.2 MHz).
DEFAULT_TICK_S = 1.0 / (128 * 499.2e6)


class MsgKind(enum.Enum):
    RANGING_INIT = "ranging-init"
    RANGING_RESP = "ranging-resp"
    RANGING_FINAL = "ranging-final"
    RANGING_REPORT = "ranging-report"
    CHIRP = "chirp"


@dataclass(frozen=True)
class StateSummary:
    """Position mean plus full-state covariance, as carried in message payloads."""

    mu_p: np.ndarray  # (3,)
    cov: np.ndarray  # (N_x, N_x)


@dataclass
class Message:
    kind: MsgKind
    src: object  # NodeId
    dst: object | None  # None for chirp broadcast
    tx_ts: float | None = None  # local-clock ticks at the sender
    rx_ts: float | None = None  # local-clock ticks at the receiver
    payload: StateSummary | None = None
    data: dict = field(default_factory=dict)
    session_id: int = 0


def twr_range(t1, t2, t3, t4, t5, t6, tick_period: float = DEFAULT_TICK_S) -> float:
    """Symmetric double-sided TWR range from six local timestamps [ticks].

    ToF = (Tround1 Tround2 - Treply1 Treply2) / (Tround1 + Tround2 + Treply1 + Treply2)
    with Tround1 = t4-t1, Treply1 = t3-t2, Tround2 = t6-t3, Treply2 = t5-t4.
    """
    round1 = t4 - t1
    reply1 = t3 - t2
    round2 = t6 - t3
    reply2 = t5 - t4
    if round1 <= 0 or round2 <= 0 or reply1 < 0 or reply2 < 0:
        raise RangingError("non-monotone ranging timestamps")
    denom = round1 + round2 + reply1 + reply2
    tof_ticks = (round1 * round2 - reply1 * reply2) / denom
    if tof_ticks < 0:
        raise RangingError("negative time of flight (garbled exchange)")
    return tof_ticks * tick_period * SPEED_OF_LIGHT


class Phase(enum.Enum):
    IDLE = "idle"
    AWAITING_RESP = "awaiting-resp"
    AWAITING_FINAL = "awaiting-final"
    AWAITING_REPORT = "awaiting-report"
    DONE = "done"
    FAILED = "failed"


TIMEOUT = object()  # sentinel event for ranging_fsm_step


@dataclass
class SendMessage:
    """FSM output: transmit a message; ts_slot names the session timestamp
    the driver must fill with the actual transmit timestamp."""

    kind: MsgKind
    dst: object
    data: dict = field(default_factory=dict)
    ts_slot: str | None = None


@dataclass
class RangeReady:
    """FSM output: the exchange produced a range value [m]."""

    value: float


@dataclass
class RangingSession:
    initiator: object
    responder: object
    session_id: int = 0
    tick_period: float = DEFAULT_TICK_S
    phase: Phase = Phase.IDLE
    t1: float | None = None
    t2: float | None = None
    t3: float | None = None
    t4: float | None = None
    t5: float | None = None
    t6: float | None = None
    deadline: float | None = None

    def record_tx(self, slot: str, ts: float) -> None:
        setattr(self, slot, ts)

    @property
    def active(self) -> bool:
        return self.phase in (
            Phase.AWAITING_RESP,
            Phase.AWAITING_FINAL,
            Phase.AWAITING_REPORT,
        )

    def partner_of(self, node) -> object:
        return self.responder if node == self.initiator else self.initiator


def begin_ranging(session: RangingSession) -> list:
    """Initiator kickoff: send the init message and await the response."""
    if session.phase is not Phase.IDLE:
        raise InvalidArgumentError("session already started")
    session.phase = Phase.AWAITING_RESP
    return [
        SendMessage(
            MsgKind.RANGING_INIT,
            session.responder,
            data={"session_id": session.session_id},
            ts_slot="t1",
        )
    ]


def ranging_fsm_step(session: RangingSession, event, node) -> tuple[RangingSession, list]:
    """Deterministic transition table for one node's view of a ranging session.

    `event` is a received Message or the TIMEOUT sentinel. Unexpected messages
    (wrong sender during lockout, wrong kind for the phase) are dropped and
    leave the session unchanged.
    """
    if event is TIMEOUT:
        if session.active:
            session.phase = Phase.FAILED
        return session, []
    msg = event
    if msg.src != session.partner_of(node):
        return session, []  # lockout: only accept messages from the partner

    if node == session.responder:
        if session.phase is Phase.IDLE and msg.kind is MsgKind.RANGING_INIT:
            session.t2 = msg.rx_ts
            session.phase = Phase.AWAITING_FINAL
            return session, [
                SendMessage(
                    MsgKind.RANGING_RESP,
                    session.initiator,
                    data={"t2": session.t2},
                    ts_slot="t3",
                )
            ]
        if session.phase is Phase.AWAITING_FINAL and msg.kind is MsgKind.RANGING_FINAL:
            session.t1 = msg.data["t1"]
            session.t4 = msg.data["t4"]
            session.t5 = msg.tx_ts
            session.t6 = msg.rx_ts
            try:
                value = twr_range(
                    session.t1, session.t2, session.t3,
                    session.t4, session.t5, session.t6,
                    session.tick_period,
                )
            except RangingError:
                session.phase = Phase.FAILED
                return session, []
            session.phase = Phase.DONE
            return session, [
                RangeReady(value),
                SendMessage(
                    MsgKind.RANGING_REPORT,
                    session.initiator,
                    data={"range": value},
                ),
            ]
        return session, []

    # Initiator side.
    if session.phase is Phase.AWAITING_RESP and msg.kind is MsgKind.RANGING_RESP:
        session.t2 = msg.data["t2"]
        session.t3 = msg.tx_ts
        session.t4 = msg.rx_ts
        session.phase = Phase.AWAITING_REPORT
        return session, [
            SendMessage(
                MsgKind.RANGING_FINAL,
                session.responder,
                data={"t1": session.t1, "t4": session.t4},
                ts_slot="t5",
            )
        ]
    if session.phase is Phase.AWAITING_REPORT and msg.kind is MsgKind.RANGING_REPORT:
        session.phase = Phase.DONE
        return session, [RangeReady(msg.data["range"])]
    return session, []


# --- neighbor discovery ------------------------------------------------------


@dataclass
class NeighborEntry:
    last_heard: float
    mu_p: np.ndarray  # (3,)
    cov: np.ndarray  # (N_x, N_x)
    xi: float  # latest channel-quality estimate


class NeighborTable:
    """Per-node map of recently heard neighbors and their state summaries."""

    def __init__(self):
        self.entries: dict = {}

    def purge(self, now: float, expiry: float) -> None:
        stale = [k for k, e in self.entries.items() if e.last_heard < now - expiry]
        for k in stale:
            del self.entries[k]

    def observe(self, src, summary: StateSummary | None, now: float, xi: float | None = None):
        entry = self.entries.get(src)
        if entry is None:
            entry = NeighborEntry(now, np.zeros(3), np.zeros((6, 6)), (ERC_MIN + ERC_MAX) / 2)
            self.entries[src] = entry
        entry.last_heard = now
        if summary is not None:
            entry.mu_p = np.asarray(summary.mu_p, dtype=float)
            entry.cov = np.asarray(summary.cov, dtype=float)
        if xi is not None:
            entry.xi = xi
        return entry

    def neighbors(self) -> list:
        return sorted(self.entries)

    def __contains__(self, nid) -> bool:
        return nid in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def neighbor_update(
    table: NeighborTable, msg: Message, now: float, expiry: float, xi: float | None = None
) -> NeighborTable:
    """Upsert the sender of any received message, then drop expired entries."""
    table.observe(msg.src, msg.payload, now, xi)
    table.purge(now, expiry)
    return table


# --- channel sensing and sounding -------------------------------------------


def channel_sense(arrivals, start: float, duration: float):
    """Outcome of listening over [start, start + duration).

    Returns ("busy", t_first_arrival) or ("idle", start + duration). A zero
    duration window is idle by definition.
    """
    if duration < 0:
        raise InvalidArgumentError("sense duration must be >= 0")
    hits = [t for t in arrivals if start <= t < start + duration]
    if hits:
        return "busy", min(hits)
    return "idle", start + duration


def sound_channel(nlos: bool, distance: float = 0.0, rng=None, noise_sigma: float = 0.1) -> float:
    """Simulated channel-quality estimate from link truth.

    LOS maps near the top of the usable coefficient range, NLOS near the
    bottom; multiplicative lognormal estimation noise, clamped to the range.
    """
    base = ERC_MIN if nlos else ERC_MAX
    if rng is not None and noise_sigma > 0:
        base *= float(np.exp(rng.normal(0.0, noise_sigma)))
    return float(min(ERC_MAX, max(ERC_MIN, base)))


# --- clocks ------------------------------------------------------------------


@dataclass(frozen=True)
class ClockModel:
    """Free-running local clock: offset [s] plus frequency drift [ppm]."""

    offset: float = 0.0
    drift_ppm: float = 0.0

    def __post_init__(self):
        if abs(self.drift_ppm) > 100.0:
            raise InvalidArgumentError("clock drift limited to 100 ppm")

    def ticks(self, t: float, tick_period: float = DEFAULT_TICK_S) -> float:
        return (t * (1.0 + self.drift_ppm * 1e-6) + self.offset) / tick_period


# --- channel-access policies -------------------------------------------------


def chirp_scheduler(rng, mean_interval: float) -> float:
    """Next inter-chirp wait: exponential with the given mean (Poisson process)."""
    if mean_interval <= 0:
        raise InvalidArgumentError("mean chirp interval must be > 0")
    return float(rng.exponential(mean_interval))


@dataclass(frozen=True)
class AlohaPolicy:
    """Transmit without sensing, at randomly jittered attempt times."""

    mean_delay_s: float = 0.02
    name = "ALOHA"

    def attempt_delay(self, rng) -> float:
        return float(rng.exponential(self.mean_delay_s))


@dataclass(frozen=True)
class CsmaPolicy:
    """Sense first; exponential backoff while the channel is busy."""

    sense_s: float = 0.0005
    backoff_base_s: float = 0.001
    max_attempts: int = 6
    name = "CSMA"

    def sense_window(self, rng) -> float:
        return self.sense_s

    def backoff(self, attempt: int, rng) -> float | None:
        """Backoff delay before retry `attempt` (0-based); None when giving up."""
        if attempt >= self.max_attempts:
            return None
        return float(self.backoff_base_s * (2**attempt) * rng.random())


@dataclass(frozen=True)
class HtnaPolicy:
    """Random sense window; if idle, gate the transmission on the
    trace-reduction-vs-increase threshold (see operation.htna_decide)."""

    t_m_s: float = 0.002
    window_lo: float = 0.5
    window_hi: float = 2.0
    name = "HTNA"

    def sense_window(self, rng) -> float:
        return float(rng.uniform(self.window_lo, self.window_hi) * self.t_m_s)
