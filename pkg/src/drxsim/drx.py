"""Core DRX domain types and the pure UE state-transition function.

Everything in this module is a plain value type or a pure function, so it can
be shared freely between concurrent simulation instances.  The simulation
engine computes DRX timing arithmetically for speed, but its behaviour must
agree with ``advance`` on every (mode, event) pair; the unit tests enumerate
them all.

Timeline convention: a DRX cycle of length L consists of a low-power period
of ``L - t_on`` followed by an on-duration of ``t_on`` that closes the cycle.
``UeState.cycle_index`` counts *completed* cycles since DRX was enabled, so it
is incremented when an on-duration ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum


class ProtocolError(RuntimeError):
    """An illegal (mode, event) pair reached the UE state machine.

    This always signals a bug in the caller (the simulator), never a property
    of the simulated scenario, so it must not be swallowed.
    """


class Mode(Enum):
    ACTIVE = "active"
    INACTIVITY_COUNTDOWN = "inactivity_countdown"
    SLEEPING = "sleeping"
    ON_DURATION = "on_duration"


class DrxEvent(Enum):
    INACTIVITY_EXPIRY = "inactivity_expiry"
    ON_DURATION_START = "on_duration_start"
    ON_DURATION_END = "on_duration_end"
    RELEASE_TRIGGERED = "release_triggered"


class PolicyKind(Enum):
    STANDARD = "standard"
    FIXED_COALESCING = "fixed"
    ADAPTIVE_COALESCING = "adaptive"


@dataclass(frozen=True, slots=True)
class DrxConfig:
    """The five timers that configure the UE sleep schedule (all in ms).

    ``t_in``     idle time before DRX is (re-)enabled.
    ``t_on``     listening window at the end of every DRX cycle.
    ``t_short``  length of the first ``n_short`` cycles after enabling DRX.
    ``t_long``   length of every cycle after that.
    ``n_short``  how many short cycles precede the long ones.
    """

    t_in: float
    t_on: float
    t_short: float
    t_long: float
    n_short: int = 0

    def __post_init__(self) -> None:
        if self.t_in < 0:
            raise ValueError(f"t_in must be >= 0, got {self.t_in}")
        if self.t_on <= 0 or self.t_short <= 0 or self.t_long <= 0:
            raise ValueError("t_on, t_short and t_long must be > 0")
        if not (self.t_on < self.t_short <= self.t_long):
            raise ValueError(
                f"need t_on < t_short <= t_long, got "
                f"({self.t_on}, {self.t_short}, {self.t_long})"
            )
        if self.n_short < 0:
            raise ValueError(f"n_short must be >= 0, got {self.n_short}")


@dataclass(frozen=True, slots=True)
class Policy:
    """Release discipline governing downlink transmission.

    ``q_w`` is the fixed queue threshold (fixed coalescing only).  ``w_star``
    and ``w_max`` are the target and maximum mean queueing delay in ms
    (adaptive coalescing only).  Use the class methods to build instances.
    """

    kind: PolicyKind
    q_w: float = 1.0
    w_star: float | None = None
    w_max: float | None = None

    def __post_init__(self) -> None:
        if self.kind is PolicyKind.FIXED_COALESCING and self.q_w < 1:
            raise ValueError(f"fixed coalescing needs q_w >= 1, got {self.q_w}")
        if self.kind is PolicyKind.ADAPTIVE_COALESCING:
            if self.w_star is None or self.w_max is None:
                raise ValueError("adaptive coalescing needs w_star and w_max")
            if not (self.w_max >= self.w_star > 0):
                raise ValueError(
                    f"need w_max >= w_star > 0, got ({self.w_star}, {self.w_max})"
                )

    @classmethod
    def standard(cls) -> "Policy":
        return cls(PolicyKind.STANDARD)

    @classmethod
    def fixed(cls, q_w: float) -> "Policy":
        return cls(PolicyKind.FIXED_COALESCING, q_w=q_w)

    @classmethod
    def adaptive(cls, w_star: float, w_max: float) -> "Policy":
        return cls(PolicyKind.ADAPTIVE_COALESCING, w_star=w_star, w_max=w_max)


@dataclass(frozen=True, slots=True)
class UeState:
    """Snapshot of the UE DRX machine.

    ``cycle_index`` is the number of completed DRX cycles since DRX was last
    enabled; it resets to 0 whenever DRX is disabled.  ``next_event_at`` is
    the absolute time (ms) of the next scheduled autonomous transition, or
    ``inf`` when the next event is driven by traffic instead of a timer.
    """

    mode: Mode
    cycle_index: int = 0
    next_event_at: float = math.inf


def initial_state(cfg: DrxConfig, now: float = 0.0) -> UeState:
    """State at simulation start: idle, inactivity timer running from `now`."""
    return UeState(Mode.INACTIVITY_COUNTDOWN, 0, now + cfg.t_in)


def next_cycle_length(cycle_index: int, cfg: DrxConfig) -> float:
    """Length of the DRX cycle that follows `cycle_index` completed cycles."""
    if cycle_index < 0:
        raise ValueError(f"cycle_index must be >= 0, got {cycle_index}")
    return cfg.t_short if cycle_index < cfg.n_short else cfg.t_long


def release_condition(
    queue_len: int, policy: Policy, current_q_w: float | None = None
) -> bool:
    """Should the eNB start transmitting to a UE with `queue_len` packets queued?

    Standard DRX transmits on any backlog.  Coalescing policies hold traffic
    until the backlog reaches the threshold; the threshold is a positive real
    (the adaptive controller produces reals) and the comparison quantizes it
    with a ceiling only here, at the comparison.
    """
    if queue_len < 0:
        raise ValueError(f"queue_len must be >= 0, got {queue_len}")
    if policy.kind is PolicyKind.STANDARD:
        return queue_len >= 1
    if policy.kind is PolicyKind.FIXED_COALESCING:
        return queue_len >= math.ceil(policy.q_w)
    # adaptive: threshold owned by the controller, supplied by the caller
    if current_q_w is None:
        raise ValueError("adaptive policy needs the controller's current q_w")
    return queue_len >= math.ceil(current_q_w)


def advance(state: UeState, event: DrxEvent, cfg: DrxConfig) -> UeState:
    """Apply one DRX event and return the successor state.

    Legal pairs only:

    ==========================  =======================================
    event                       legal in mode
    ==========================  =======================================
    INACTIVITY_EXPIRY           INACTIVITY_COUNTDOWN
    ON_DURATION_START           SLEEPING
    ON_DURATION_END             ON_DURATION
    RELEASE_TRIGGERED           ON_DURATION or ACTIVE
    ==========================  =======================================

    Timer events are assumed to fire exactly at ``state.next_event_at``; the
    returned state carries the next timer deadline so cycles chain without
    the caller re-deriving the cycle geometry.
    """
    mode = state.mode
    if event is DrxEvent.INACTIVITY_EXPIRY:
        if mode is not Mode.INACTIVITY_COUNTDOWN:
            raise ProtocolError(f"{event} illegal in {mode}")
        t0 = state.next_event_at
        first = next_cycle_length(0, cfg)
        return UeState(Mode.SLEEPING, 0, t0 + first - cfg.t_on)
    if event is DrxEvent.ON_DURATION_START:
        if mode is not Mode.SLEEPING:
            raise ProtocolError(f"{event} illegal in {mode}")
        return UeState(Mode.ON_DURATION, state.cycle_index,
                       state.next_event_at + cfg.t_on)
    if event is DrxEvent.ON_DURATION_END:
        if mode is not Mode.ON_DURATION:
            raise ProtocolError(f"{event} illegal in {mode}")
        done = state.cycle_index + 1
        nxt = next_cycle_length(done, cfg)
        return UeState(Mode.SLEEPING, done, state.next_event_at + nxt - cfg.t_on)
    if event is DrxEvent.RELEASE_TRIGGERED:
        if mode not in (Mode.ON_DURATION, Mode.ACTIVE):
            raise ProtocolError(f"{event} illegal in {mode}")
        return UeState(Mode.ACTIVE, 0, math.inf)
    raise ProtocolError(f"unknown event {event!r}")


def enter_countdown(state: UeState, last_tx_end: float, cfg: DrxConfig) -> UeState:
    """Transition Active -> InactivityCountdown when the queue drains.

    Not an ``advance`` event: it is driven by the queue emptying, not by a
    DRX timer.  The inactivity deadline is measured from the end of the last
    transmission, matching the empty-period accounting of the delay model.
    """
    if state.mode is not Mode.ACTIVE:
        raise ProtocolError(f"countdown entry illegal in {state.mode}")
    return replace(state, mode=Mode.INACTIVITY_COUNTDOWN,
                   next_event_at=last_tx_end + cfg.t_in)
