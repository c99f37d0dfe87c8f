"""Two-party handoff coordination: messages, state machines, link, dispenser.

Both drone-side protocol machines are pure functions from (context, event)
to (context, actions); the timed scenario harness and the exhaustive
interleaving checker drive the exact same step code, so what the checker
verifies is what the simulation runs.

Loss handling: the flowcharted exchange assumes a perfect radio, so a
retransmission layer is added here. Each request kind is re-sent on a
0.5 s timer until its acknowledging kind arrives, up to 5 attempts, then
the sender aborts. Handlers are idempotent: duplicate deliveries re-elicit
the response instead of corrupting state. With retransmission disabled,
absolute per-wait timeouts abort instead of deadlocking.

Acknowledgement pairs:
    BATTERY_REQUEST  -> VERIFICATION
    VERIFICATION     -> LOCK_CONFIRMED
    SLIDE_SYNC_OPEN  -> SLIDE_ACK
    BATTERY_RELEASED -> TRANSFER_DONE
    TRANSFER_DONE    -> SLIDE_SYNC_CLOSE
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------

class MsgKind(Enum):
    BATTERY_REQUEST = "battery_request"
    VERIFICATION = "verification"
    LOCK_CONFIRMED = "lock_confirmed"
    SLIDE_SYNC_OPEN = "slide_sync_open"
    SLIDE_SYNC_CLOSE = "slide_sync_close"
    SLIDE_ACK = "slide_ack"
    BATTERY_RELEASED = "battery_released"
    TRANSFER_DONE = "transfer_done"
    ABORT = "abort"


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MsgKind
    sender: str                 # "ebs" or "receiver"
    seq: int = 0
    payload: tuple = ()
    send_time: float = 0.0


# acknowledging kind and absolute-timeout bucket per reliable request kind
_ACK_OF = {
    MsgKind.BATTERY_REQUEST: MsgKind.VERIFICATION,
    MsgKind.VERIFICATION: MsgKind.LOCK_CONFIRMED,
    MsgKind.SLIDE_SYNC_OPEN: MsgKind.SLIDE_ACK,
    MsgKind.BATTERY_RELEASED: MsgKind.TRANSFER_DONE,
    MsgKind.TRANSFER_DONE: MsgKind.SLIDE_SYNC_CLOSE,
}


def ack_kind_of(kind: MsgKind) -> MsgKind | None:
    return _ACK_OF.get(kind)


# ---------------------------------------------------------------------------
# Events and actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MsgEvent:
    msg: ProtocolMessage


@dataclass(frozen=True)
class TimerEvent:
    name: str


@dataclass(frozen=True)
class NavPhaseEvent:
    phase: str          # "SEARCH", "ALIGN", "LOCK"


@dataclass(frozen=True)
class ArrivedAtAnchor:
    pass


@dataclass(frozen=True)
class SlideOpened:
    pass


@dataclass(frozen=True)
class SlideClosed:
    pass


@dataclass(frozen=True)
class IrBatteryArrived:
    pass


@dataclass(frozen=True)
class BatteryLow:
    gps: tuple


@dataclass(frozen=True)
class DispenseDone:
    pass


@dataclass(frozen=True)
class DispenseFailed:
    reason: str = "no full battery slot"


@dataclass(frozen=True)
class LatchFailed:
    reason: str = "latch lost"


Event = (MsgEvent | TimerEvent | NavPhaseEvent | ArrivedAtAnchor | SlideOpened
         | SlideClosed | IrBatteryArrived | BatteryLow | DispenseDone
         | DispenseFailed | LatchFailed)


@dataclass(frozen=True)
class Send:
    kind: MsgKind
    payload: tuple = ()


@dataclass(frozen=True)
class StartTimer:
    name: str
    duration: float


@dataclass(frozen=True)
class CancelTimer:
    name: str


@dataclass(frozen=True)
class OpenSlides:
    pass


@dataclass(frozen=True)
class CloseSlides:
    pass


@dataclass(frozen=True)
class Dispense:
    pass


@dataclass(frozen=True)
class EngageHold:
    pass


@dataclass(frozen=True)
class ResumeMission:
    pass


@dataclass(frozen=True)
class StartNav:
    anchor: tuple


@dataclass(frozen=True)
class ReturnHome:
    pass


@dataclass(frozen=True)
class LogIgnored:
    detail: str


Action = (Send | StartTimer | CancelTimer | OpenSlides | CloseSlides | Dispense
          | EngageHold | ResumeMission | StartNav | ReturnHome | LogIgnored)


@dataclass(frozen=True)
class ProtocolConfig:
    retransmit_interval: float = 0.5
    max_attempts: int = 5
    retransmission_enabled: bool = True
    verification_timeout: float = 3.0
    lock_timeout: float = 120.0
    slide_ack_timeout: float = 2.0
    transfer_timeout: float = 3.0
    mutant: str | None = None    # "release_without_slideack" for checker tests

    def wait_timeout(self, kind: MsgKind) -> float:
        if kind in (MsgKind.BATTERY_REQUEST, MsgKind.VERIFICATION):
            return self.verification_timeout
        if kind is MsgKind.SLIDE_SYNC_OPEN:
            return self.slide_ack_timeout
        return self.transfer_timeout


def retx_timer_name(kind: MsgKind) -> str:
    return f"retx:{kind.value}"


def timeout_timer_name(kind: MsgKind) -> str:
    return f"timeout:{kind.value}"


def _reliable_send(cfg: ProtocolConfig, kind: MsgKind, payload: tuple = ()
                   ) -> tuple[Action, ...]:
    if cfg.retransmission_enabled:
        return (Send(kind, payload),
                StartTimer(retx_timer_name(kind), cfg.retransmit_interval))
    return (Send(kind, payload),
            StartTimer(timeout_timer_name(kind), cfg.wait_timeout(kind)))


# ---------------------------------------------------------------------------
# EBS drone state machine
# ---------------------------------------------------------------------------

class EbsState(Enum):
    IDLE = "Idle"
    VERIFYING = "Verifying"
    ENROUTE = "Enroute"
    SEARCHING = "Searching"
    ALIGNING = "Aligning"
    LOCKED = "Locked"
    SLIDES_OPENING = "SlidesOpening"
    TRANSFERRING = "Transferring"
    CLOSING = "Closing"
    RETURNING_HOME = "ReturningHome"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class EbsCtx:
    state: EbsState = EbsState.IDLE
    request_gps: tuple = ()
    attempts_verification: int = 0
    attempts_slide_sync: int = 0
    attempts_released: int = 0
    slide_ack: bool = False
    own_slide_open: bool = False
    release_done: bool = False


def _ebs_abort(ctx: EbsCtx, reason: str, send_abort: bool = True,
               ) -> tuple[EbsCtx, tuple[Action, ...]]:
    actions: tuple[Action, ...] = (CloseSlides(),)
    if send_abort:
        actions = (Send(MsgKind.ABORT, (reason,)),) + actions
    return replace(ctx, state=EbsState.ABORTED), actions


def ebs_fsm_step(ctx: EbsCtx, event: Event, cfg: ProtocolConfig,
                 ) -> tuple[EbsCtx, tuple[Action, ...]]:
    """One deterministic transition of the battery-carrier machine."""
    s = ctx.state

    if s is EbsState.ABORTED:
        return ctx, (LogIgnored(f"aborted: {event}"),)

    if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.ABORT:
        return replace(ctx, state=EbsState.ABORTED), (CloseSlides(),)

    if isinstance(event, LatchFailed):
        if s in (EbsState.LOCKED, EbsState.SLIDES_OPENING, EbsState.TRANSFERRING):
            return _ebs_abort(ctx, event.reason)
        return ctx, (LogIgnored(f"{s.value}: {event}"),)

    # duplicate battery requests re-elicit the verification response
    if (isinstance(event, MsgEvent) and event.msg.kind is MsgKind.BATTERY_REQUEST
            and s is not EbsState.IDLE):
        return ctx, (Send(MsgKind.VERIFICATION),)

    if s is EbsState.IDLE:
        if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.BATTERY_REQUEST:
            ctx = replace(ctx, state=EbsState.VERIFYING,
                          request_gps=event.msg.payload, attempts_verification=1)
            return ctx, _reliable_send(cfg, MsgKind.VERIFICATION)
        return ctx, (LogIgnored(f"idle: {event}"),)

    if s is EbsState.VERIFYING:
        if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.LOCK_CONFIRMED:
            ctx = replace(ctx, state=EbsState.ENROUTE)
            return ctx, (CancelTimer(retx_timer_name(MsgKind.VERIFICATION)),
                         CancelTimer(timeout_timer_name(MsgKind.VERIFICATION)),
                         StartNav(ctx.request_gps))
        if event == TimerEvent(retx_timer_name(MsgKind.VERIFICATION)):
            if ctx.attempts_verification >= cfg.max_attempts:
                return _ebs_abort(ctx, "verification unacknowledged")
            ctx = replace(ctx, attempts_verification=ctx.attempts_verification + 1)
            return ctx, _reliable_send(cfg, MsgKind.VERIFICATION)
        if event == TimerEvent(timeout_timer_name(MsgKind.VERIFICATION)):
            return _ebs_abort(ctx, "verification timeout")
        return ctx, (LogIgnored(f"verifying: {event}"),)

    if s is EbsState.ENROUTE:
        if isinstance(event, ArrivedAtAnchor):
            ctx = replace(ctx, state=EbsState.SEARCHING)
            return ctx, (StartTimer("lock_timeout", cfg.lock_timeout),)
        return ctx, (LogIgnored(f"enroute: {event}"),)

    if s in (EbsState.SEARCHING, EbsState.ALIGNING):
        if event == TimerEvent("lock_timeout"):
            return _ebs_abort(ctx, "lock timeout")
        if isinstance(event, NavPhaseEvent):
            if event.phase == "ALIGN":
                return replace(ctx, state=EbsState.ALIGNING), ()
            if event.phase == "SEARCH":
                return replace(ctx, state=EbsState.SEARCHING), ()
            if event.phase == "LOCK" and s is EbsState.ALIGNING:
                ctx = replace(ctx, state=EbsState.LOCKED)
                return ctx, (CancelTimer("lock_timeout"), StartTimer("go", 0.0))
        return ctx, (LogIgnored(f"{s.value}: {event}"),)

    if s is EbsState.LOCKED:
        if event == TimerEvent("go"):
            ctx = replace(ctx, state=EbsState.SLIDES_OPENING, attempts_slide_sync=1)
            return ctx, (OpenSlides(),) + _reliable_send(cfg, MsgKind.SLIDE_SYNC_OPEN)
        return ctx, (LogIgnored(f"locked: {event}"),)

    if s is EbsState.SLIDES_OPENING:
        advanced: tuple[Action, ...] = ()
        if isinstance(event, SlideOpened):
            ctx = replace(ctx, own_slide_open=True)
        elif isinstance(event, MsgEvent) and event.msg.kind is MsgKind.SLIDE_ACK:
            ctx = replace(ctx, slide_ack=True)
            advanced = (CancelTimer(retx_timer_name(MsgKind.SLIDE_SYNC_OPEN)),
                        CancelTimer(timeout_timer_name(MsgKind.SLIDE_SYNC_OPEN)))
        elif event == TimerEvent(retx_timer_name(MsgKind.SLIDE_SYNC_OPEN)):
            if ctx.attempts_slide_sync >= cfg.max_attempts:
                return _ebs_abort(ctx, "slide ack unacknowledged")
            ctx = replace(ctx, attempts_slide_sync=ctx.attempts_slide_sync + 1)
            return ctx, _reliable_send(cfg, MsgKind.SLIDE_SYNC_OPEN)
        elif event == TimerEvent(timeout_timer_name(MsgKind.SLIDE_SYNC_OPEN)):
            return _ebs_abort(ctx, "slide ack timeout")
        else:
            return ctx, (LogIgnored(f"slides_opening: {event}"),)
        ready = ctx.own_slide_open and (
            ctx.slide_ack or cfg.mutant == "release_without_slideack")
        if ready:
            ctx = replace(ctx, state=EbsState.TRANSFERRING)
            return ctx, advanced + (Dispense(),)
        return ctx, advanced

    if s is EbsState.TRANSFERRING:
        if isinstance(event, DispenseDone):
            ctx = replace(ctx, release_done=True, attempts_released=1)
            return ctx, _reliable_send(cfg, MsgKind.BATTERY_RELEASED)
        if isinstance(event, DispenseFailed):
            return _ebs_abort(ctx, event.reason)
        if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.TRANSFER_DONE:
            ctx = replace(ctx, state=EbsState.CLOSING)
            return ctx, (CancelTimer(retx_timer_name(MsgKind.BATTERY_RELEASED)),
                         CancelTimer(timeout_timer_name(MsgKind.BATTERY_RELEASED)),
                         Send(MsgKind.SLIDE_SYNC_CLOSE), CloseSlides())
        if event == TimerEvent(retx_timer_name(MsgKind.BATTERY_RELEASED)):
            if ctx.attempts_released >= cfg.max_attempts:
                return _ebs_abort(ctx, "transfer unconfirmed")
            ctx = replace(ctx, attempts_released=ctx.attempts_released + 1)
            return ctx, _reliable_send(cfg, MsgKind.BATTERY_RELEASED)
        if event == TimerEvent(timeout_timer_name(MsgKind.BATTERY_RELEASED)):
            return _ebs_abort(ctx, "transfer timeout")
        return ctx, (LogIgnored(f"transferring: {event}"),)

    if s in (EbsState.CLOSING, EbsState.RETURNING_HOME):
        if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.TRANSFER_DONE:
            return ctx, (Send(MsgKind.SLIDE_SYNC_CLOSE),)
        if isinstance(event, SlideClosed) and s is EbsState.CLOSING:
            ctx = replace(ctx, state=EbsState.RETURNING_HOME)
            return ctx, (ReturnHome(),)
        return ctx, (LogIgnored(f"{s.value}: {event}"),)

    return ctx, (LogIgnored(f"{s.value}: {event}"),)


# ---------------------------------------------------------------------------
# Receiver drone state machine
# ---------------------------------------------------------------------------

class ReceiverState(Enum):
    MISSION = "Mission"
    LOW_BATTERY = "LowBattery"
    AWAITING_VERIFICATION = "AwaitingVerification"
    POSITION_HOLD = "PositionHold"
    SLIDES_OPEN = "SlidesOpen"
    RECEIVING = "Receiving"
    RECEIVED = "Received"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class ReceiverCtx:
    state: ReceiverState = ReceiverState.MISSION
    attempts_request: int = 0
    attempts_transfer_done: int = 0
    verified: bool = False
    hold_engaged: bool = False
    slide_open: bool = False
    has_battery: bool = False


def receiver_fsm_step(ctx: ReceiverCtx, event: Event, cfg: ProtocolConfig,
                      ) -> tuple[ReceiverCtx, tuple[Action, ...]]:
    """One deterministic transition of the battery-receiver machine."""
    s = ctx.state

    if s is ReceiverState.ABORTED:
        return ctx, (LogIgnored(f"aborted: {event}"),)

    if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.ABORT:
        actions: tuple[Action, ...] = (ResumeMission(),)
        if ctx.slide_open:
            actions = (CloseSlides(),) + actions
        return replace(ctx, state=ReceiverState.ABORTED, slide_open=False), actions

    if s is ReceiverState.MISSION:
        if isinstance(event, BatteryLow):
            ctx = replace(ctx, state=ReceiverState.LOW_BATTERY, attempts_request=1)
            return ctx, _reliable_send(cfg, MsgKind.BATTERY_REQUEST, event.gps)
        return ctx, (LogIgnored(f"mission: {event}"),)

    if s in (ReceiverState.LOW_BATTERY, ReceiverState.AWAITING_VERIFICATION):
        if isinstance(event, MsgEvent) and event.msg.kind is MsgKind.VERIFICATION:
            ctx = replace(ctx, state=ReceiverState.POSITION_HOLD,
                          verified=True, hold_engaged=True)
            return ctx, (CancelTimer(retx_timer_name(MsgKind.BATTERY_REQUEST)),
                         CancelTimer(timeout_timer_name(MsgKind.BATTERY_REQUEST)),
                         EngageHold(), Send(MsgKind.LOCK_CONFIRMED))
        if event == TimerEvent(retx_timer_name(MsgKind.BATTERY_REQUEST)):
            if ctx.attempts_request >= cfg.max_attempts:
                ctx = replace(ctx, state=ReceiverState.ABORTED)
                return ctx, (Send(MsgKind.ABORT, ("battery request unanswered",)),)
            ctx = replace(ctx, state=ReceiverState.AWAITING_VERIFICATION,
                          attempts_request=ctx.attempts_request + 1)
            return ctx, _reliable_send(cfg, MsgKind.BATTERY_REQUEST)
        if event == TimerEvent(timeout_timer_name(MsgKind.BATTERY_REQUEST)):
            ctx = replace(ctx, state=ReceiverState.ABORTED)
            return ctx, (Send(MsgKind.ABORT, ("verification timeout",)),)
        return ctx, (LogIgnored(f"{s.value}: {event}"),)

    if s is ReceiverState.POSITION_HOLD:
        if isinstance(event, MsgEvent):
            if event.msg.kind is MsgKind.VERIFICATION:
                return ctx, (Send(MsgKind.LOCK_CONFIRMED),)
            if event.msg.kind is MsgKind.SLIDE_SYNC_OPEN:
                # ack deferred until the slide is physically deployed, so the
                # sender can never release before the catching slide is out
                ctx = replace(ctx, state=ReceiverState.SLIDES_OPEN, slide_open=False)
                return ctx, (OpenSlides(),)
        return ctx, (LogIgnored(f"position_hold: {event}"),)

    if s in (ReceiverState.SLIDES_OPEN, ReceiverState.RECEIVING):
        if isinstance(event, SlideOpened):
            ctx = replace(ctx, slide_open=True)
            return ctx, (Send(MsgKind.SLIDE_ACK),)
        if isinstance(event, MsgEvent):
            if event.msg.kind is MsgKind.SLIDE_SYNC_OPEN:
                if ctx.slide_open:
                    return ctx, (Send(MsgKind.SLIDE_ACK),)
                return ctx, (LogIgnored("slide still deploying"),)
            if event.msg.kind is MsgKind.BATTERY_RELEASED:
                if s is ReceiverState.SLIDES_OPEN:
                    return replace(ctx, state=ReceiverState.RECEIVING), ()
                return ctx, (LogIgnored("duplicate battery_released"),)
            if event.msg.kind is MsgKind.VERIFICATION:
                return ctx, (Send(MsgKind.LOCK_CONFIRMED),)
        if isinstance(event, IrBatteryArrived):
            ctx = replace(ctx, state=ReceiverState.RECEIVED, has_battery=True,
                          attempts_transfer_done=1)
            return ctx, _reliable_send(cfg, MsgKind.TRANSFER_DONE)
        return ctx, (LogIgnored(f"{s.value}: {event}"),)

    if s is ReceiverState.RECEIVED:
        if isinstance(event, MsgEvent):
            if event.msg.kind is MsgKind.SLIDE_SYNC_CLOSE:
                ctx = replace(ctx, state=ReceiverState.MISSION, slide_open=False)
                return ctx, (CancelTimer(retx_timer_name(MsgKind.TRANSFER_DONE)),
                             CancelTimer(timeout_timer_name(MsgKind.TRANSFER_DONE)),
                             CloseSlides(), ResumeMission())
            if event.msg.kind is MsgKind.BATTERY_RELEASED:
                return ctx, (Send(MsgKind.TRANSFER_DONE),)
        if event == TimerEvent(retx_timer_name(MsgKind.TRANSFER_DONE)):
            if ctx.attempts_transfer_done >= cfg.max_attempts:
                # battery is in hand: close up and resume rather than abort
                ctx = replace(ctx, state=ReceiverState.MISSION, slide_open=False)
                return ctx, (CloseSlides(), ResumeMission())
            ctx = replace(ctx, attempts_transfer_done=ctx.attempts_transfer_done + 1)
            return ctx, _reliable_send(cfg, MsgKind.TRANSFER_DONE)
        if event == TimerEvent(timeout_timer_name(MsgKind.TRANSFER_DONE)):
            ctx = replace(ctx, state=ReceiverState.MISSION, slide_open=False)
            return ctx, (CloseSlides(), ResumeMission())
        return ctx, (LogIgnored(f"received: {event}"),)

    return ctx, (LogIgnored(f"{s.value}: {event}"),)


# ---------------------------------------------------------------------------
# Lossy link
# ---------------------------------------------------------------------------

@dataclass
class LinkModel:
    """Lossy, latent radio link preserving per-sender FIFO order."""

    loss_probability: float = 0.05
    base_latency: float = 0.020
    jitter: float = 0.010
    _last_scheduled: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not 0.0 <= self.loss_probability < 1.0:
            raise ValueError("loss probability must be in [0, 1)")


def link_transmit(link: LinkModel, msg: ProtocolMessage, now: float,
                  rng: np.random.Generator) -> float | None:
    """Schedule a message: deliver-at time, or None when dropped."""
    link.validate()
    if link.loss_probability > 0.0 and rng.random() < link.loss_probability:
        return None
    raw = now + link.base_latency
    if link.jitter > 0.0:
        raw += float(rng.uniform(-link.jitter, link.jitter))
    floor = link._last_scheduled.get(msg.sender, -float("inf"))
    deliver_at = max(raw, floor + 1e-9)
    link._last_scheduled[msg.sender] = deliver_at
    return deliver_at


# ---------------------------------------------------------------------------
# Battery dispenser
# ---------------------------------------------------------------------------

class SlotState(Enum):
    FULL = "Full"
    EMPTY = "Empty"
    DISPENSING = "Dispensing"


class NoFullSlot(RuntimeError):
    """Dispense requested with every slot empty."""


@dataclass(frozen=True)
class BatteryCase:
    slots: tuple[SlotState, ...] = (SlotState.FULL, SlotState.FULL, SlotState.FULL)
    servo_position: int = 0
    dispensed_count: int = 0

    def ir_readings(self) -> tuple[bool, ...]:
        """Per-slot availability as seen by the slot IR sensor."""
        return tuple(s is SlotState.FULL for s in self.slots)


def dispenser_step(case: BatteryCase, command: str = "none",
                   ) -> tuple[BatteryCase, bool]:
    """Advance the dispenser; returns (case, battery released this step)."""
    if command != "dispense":
        return case, False
    readings = case.ir_readings()
    if not any(readings):
        raise NoFullSlot("all three battery slots are empty")
    slot = readings.index(True)
    slots = list(case.slots)
    slots[slot] = SlotState.EMPTY
    return BatteryCase(
        slots=tuple(slots),
        servo_position=slot,
        dispensed_count=case.dispensed_count + 1,
    ), True
