"""Exhaustive interleaving verification of the handoff protocol.

Explores every ordering of message deliveries, message drops (up to a loss
budget), retransmission timer firings, and physical completions, driving
the exact state-machine code the timed simulation runs. Time is abstracted
away; a retransmission timer is enabled only when the awaited exchange is
genuinely stuck (neither the request nor its acknowledgement is in
flight), which mirrors the timed system where timers far outlast the link
round trip.

Checked on every transition:
    S1  the battery is dispensed only in Transferring with SlideAck held
    S2  the receiver opens its slide only after verification + hold
    S3  at most one battery release per handoff session

plus bounded termination: every explored run ends in a completed transfer
or a mutual abort; anything stuck or deeper than the bound is reported.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field, replace

from .protocol import (
    ArrivedAtAnchor,
    BatteryCase,
    BatteryLow,
    CancelTimer,
    CloseSlides,
    Dispense,
    DispenseDone,
    EbsCtx,
    EbsState,
    IrBatteryArrived,
    MsgEvent,
    MsgKind,
    NavPhaseEvent,
    NoFullSlot,
    OpenSlides,
    ProtocolConfig,
    ProtocolMessage,
    ReceiverCtx,
    ReceiverState,
    Send,
    SlideClosed,
    SlideOpened,
    StartTimer,
    TimerEvent,
    ack_kind_of,
    dispenser_step,
    ebs_fsm_step,
    receiver_fsm_step,
)


class StateExplosion(RuntimeError):
    """Search frontier exceeded the configured cap."""


# EBS slide actuator phases
_SLIDE_CLOSED = 0
_SLIDE_OPENING = 1
_SLIDE_OPEN = 2
_SLIDE_CLOSING = 3


@dataclass(frozen=True)
class _SysState:
    ebs: EbsCtx
    rec: ReceiverCtx
    q_to_rec: tuple = ()          # (kind, payload) in flight, FIFO
    q_to_ebs: tuple = ()
    ebs_timers: frozenset = frozenset()
    rec_timers: frozenset = frozenset()
    drops_used: int = 0
    slide_phase: int = _SLIDE_CLOSED
    rec_slide_phase: int = _SLIDE_CLOSED
    pending_dispense: bool = False
    battery_in_transit: bool = False
    case: BatteryCase = field(default_factory=BatteryCase)
    release_count: int = 0


@dataclass
class Violation:
    rule: str
    detail: str
    trace: list[str]


@dataclass
class CheckResult:
    states_explored: int
    terminals: Counter
    violations: list[Violation]
    nonterminating: int
    partial: bool = False

    @property
    def ok(self) -> bool:
        return (not self.violations and self.nonterminating == 0
                and not self.partial)

    def summary(self) -> dict:
        return {
            "states_explored": self.states_explored,
            "terminals": {k: v for k, v in sorted(self.terminals.items())},
            "violations": [
                {"rule": v.rule, "detail": v.detail, "trace": v.trace}
                for v in self.violations
            ],
            "nonterminating": self.nonterminating,
            "partial": self.partial,
            "verdict": "PASS" if self.ok else "FAIL",
        }


def _apply_side_actions(state: _SysState, side: str, actions,
                        violations: list, trace_getter) -> _SysState:
    """Fold FSM actions into the system state, checking safety as we go."""
    for act in actions:
        if isinstance(act, Send):
            entry = (act.kind, act.payload)
            if side == "ebs":
                state = replace(state, q_to_rec=state.q_to_rec + (entry,))
            else:
                state = replace(state, q_to_ebs=state.q_to_ebs + (entry,))
        elif isinstance(act, StartTimer):
            if side == "ebs":
                state = replace(state, ebs_timers=state.ebs_timers | {act.name})
            else:
                state = replace(state, rec_timers=state.rec_timers | {act.name})
        elif isinstance(act, CancelTimer):
            if side == "ebs":
                state = replace(state, ebs_timers=state.ebs_timers - {act.name})
            else:
                state = replace(state, rec_timers=state.rec_timers - {act.name})
        elif isinstance(act, OpenSlides):
            if side == "ebs":
                state = replace(state, slide_phase=_SLIDE_OPENING)
            else:
                if not (state.rec.verified and state.rec.hold_engaged):
                    violations.append(Violation(
                        "S2", "receiver slide opened before verification and hold",
                        trace_getter()))
                state = replace(state, rec_slide_phase=_SLIDE_OPENING)
        elif isinstance(act, CloseSlides):
            if side == "ebs":
                if state.slide_phase in (_SLIDE_OPENING, _SLIDE_OPEN):
                    state = replace(state, slide_phase=_SLIDE_CLOSING)
            else:
                state = replace(state, rec_slide_phase=_SLIDE_CLOSED)
        elif isinstance(act, Dispense):
            if not (state.ebs.state is EbsState.TRANSFERRING and state.ebs.slide_ack):
                violations.append(Violation(
                    "S1", "battery dispensed without Transferring + SlideAck",
                    trace_getter()))
            if state.release_count + 1 > 1:
                violations.append(Violation(
                    "S3", "more than one battery released in a session",
                    trace_getter()))
            try:
                case, released = dispenser_step(state.case, "dispense")
            except NoFullSlot:
                case, released = state.case, False
            if released:
                state = replace(state, case=case, pending_dispense=True,
                                battery_in_transit=True,
                                release_count=state.release_count + 1)
        # EngageHold / ResumeMission / StartNav / ReturnHome / LogIgnored:
        # no effect on the abstract system state
    return state


def _retx_enabled(state: _SysState, side: str, timer: str) -> bool:
    """A retransmit/timeout timer may fire only when its wait is stuck."""
    if timer == "go":
        return True
    if timer == "lock_timeout":
        return False   # nav progress is always available in the abstract model
    if not (timer.startswith("retx:") or timer.startswith("timeout:")):
        return False
    kind = MsgKind(timer.split(":", 1)[1])
    ack = ack_kind_of(kind)
    own_queue = state.q_to_ebs if side == "ebs" else state.q_to_rec
    peer_queue = state.q_to_rec if side == "ebs" else state.q_to_ebs
    if any(k is kind for k, _ in peer_queue):
        return False
    if ack is not None and any(k is ack for k, _ in own_queue):
        return False
    if kind is MsgKind.BATTERY_RELEASED and (
            state.pending_dispense
            or (state.battery_in_transit and state.rec_slide_phase == _SLIDE_OPEN)):
        # the acknowledging TRANSFER_DONE is still physically on its way
        return False
    if kind is MsgKind.SLIDE_SYNC_OPEN and state.rec_slide_phase == _SLIDE_OPENING:
        # the SLIDE_ACK arrives once the receiver slide finishes deploying
        return False
    return True


def _enabled_moves(state: _SysState, loss_budget: int) -> list[tuple[str, str, object]]:
    """(label, side, event) for every move possible from this state."""
    moves: list[tuple[str, str, object]] = []
    if state.q_to_rec:
        kind, payload = state.q_to_rec[0]
        msg = ProtocolMessage(kind=kind, sender="ebs", payload=payload)
        moves.append((f"deliver->rec {kind.value}", "rec_deliver", MsgEvent(msg)))
    if state.q_to_ebs:
        kind, payload = state.q_to_ebs[0]
        msg = ProtocolMessage(kind=kind, sender="receiver", payload=payload)
        moves.append((f"deliver->ebs {kind.value}", "ebs_deliver", MsgEvent(msg)))
    if state.drops_used < loss_budget:
        if state.q_to_rec:
            moves.append((f"drop->rec {state.q_to_rec[0][0].value}", "rec_drop", None))
        if state.q_to_ebs:
            moves.append((f"drop->ebs {state.q_to_ebs[0][0].value}", "ebs_drop", None))
    for timer in sorted(state.ebs_timers):
        if _retx_enabled(state, "ebs", timer):
            moves.append((f"timer ebs {timer}", "ebs_timer", TimerEvent(timer)))
    for timer in sorted(state.rec_timers):
        if _retx_enabled(state, "rec", timer):
            moves.append((f"timer rec {timer}", "rec_timer", TimerEvent(timer)))
    # physical completions
    if state.slide_phase == _SLIDE_OPENING:
        moves.append(("phys ebs slide opened", "ebs_phys", SlideOpened()))
    if state.slide_phase == _SLIDE_CLOSING:
        moves.append(("phys ebs slide closed", "ebs_phys_close", SlideClosed()))
    if state.rec_slide_phase == _SLIDE_OPENING:
        moves.append(("phys rec slide opened", "rec_phys", SlideOpened()))
    if state.pending_dispense:
        moves.append(("phys dispense done", "ebs_dispense_done", DispenseDone()))
    if state.battery_in_transit and state.rec_slide_phase == _SLIDE_OPEN:
        moves.append(("phys ir battery arrival", "rec_ir", IrBatteryArrived()))
    # nav progress (flight layer abstracted as eventually-successful)
    if state.ebs.state is EbsState.ENROUTE:
        moves.append(("nav arrived at anchor", "ebs_nav", ArrivedAtAnchor()))
    elif state.ebs.state is EbsState.SEARCHING:
        moves.append(("nav marker found", "ebs_nav", NavPhaseEvent("ALIGN")))
    elif state.ebs.state is EbsState.ALIGNING:
        moves.append(("nav lock achieved", "ebs_nav", NavPhaseEvent("LOCK")))
    return moves


def _apply_move(state: _SysState, side: str, event, cfg: ProtocolConfig,
                violations: list, trace_getter) -> _SysState:
    if side == "rec_drop":
        return replace(state, q_to_rec=state.q_to_rec[1:],
                       drops_used=state.drops_used + 1)
    if side == "ebs_drop":
        return replace(state, q_to_ebs=state.q_to_ebs[1:],
                       drops_used=state.drops_used + 1)
    if side == "rec_deliver":
        state = replace(state, q_to_rec=state.q_to_rec[1:])
        rec, actions = receiver_fsm_step(state.rec, event, cfg)
        state = replace(state, rec=rec)
        return _apply_side_actions(state, "rec", actions, violations, trace_getter)
    if side == "ebs_deliver":
        state = replace(state, q_to_ebs=state.q_to_ebs[1:])
        ebs, actions = ebs_fsm_step(state.ebs, event, cfg)
        state = replace(state, ebs=ebs)
        return _apply_side_actions(state, "ebs", actions, violations, trace_getter)
    if side in ("ebs_timer", "ebs_nav", "ebs_phys", "ebs_phys_close",
                "ebs_dispense_done"):
        if side == "ebs_timer":
            timer_name = event.name
            state = replace(state, ebs_timers=state.ebs_timers - {timer_name})
        if side == "ebs_phys":
            state = replace(state, slide_phase=_SLIDE_OPEN)
        if side == "ebs_phys_close":
            state = replace(state, slide_phase=_SLIDE_CLOSED)
        if side == "ebs_dispense_done":
            state = replace(state, pending_dispense=False)
        ebs, actions = ebs_fsm_step(state.ebs, event, cfg)
        state = replace(state, ebs=ebs)
        return _apply_side_actions(state, "ebs", actions, violations, trace_getter)
    if side in ("rec_timer", "rec_ir", "rec_phys"):
        if side == "rec_timer":
            state = replace(state, rec_timers=state.rec_timers - {event.name})
        if side == "rec_ir":
            state = replace(state, battery_in_transit=False)
        if side == "rec_phys":
            state = replace(state, rec_slide_phase=_SLIDE_OPEN)
        rec, actions = receiver_fsm_step(state.rec, event, cfg)
        state = replace(state, rec=rec)
        return _apply_side_actions(state, "rec", actions, violations, trace_getter)
    raise ValueError(f"unknown move side {side}")


def _classify_terminal(state: _SysState) -> str:
    if state.ebs.state is EbsState.ABORTED or state.rec.state is ReceiverState.ABORTED:
        return "aborted"
    if (state.rec.has_battery
            and state.ebs.state is EbsState.RETURNING_HOME
            and state.rec.state in (ReceiverState.MISSION, ReceiverState.RECEIVED)):
        return "transfer_done"
    return "deadlock"


def exhaustive_interleave_check(cfg: ProtocolConfig | None = None,
                                loss_budget: int = 2,
                                depth_bound: int = 400,
                                state_cap: int = 500_000,
                                max_violations: int = 16) -> CheckResult:
    """Breadth-first exploration of every interleaving within the budgets."""
    if loss_budget > 3:
        raise ValueError("loss budget is capped at 3")
    cfg = cfg or ProtocolConfig()

    violations: list[Violation] = []
    terminals: Counter = Counter()
    nonterminating = 0

    root = _SysState(ebs=EbsCtx(), rec=ReceiverCtx())
    rec, actions = receiver_fsm_step(root.rec, BatteryLow(gps=()), cfg)
    root = replace(root, rec=rec)
    root = _apply_side_actions(root, "rec", actions, violations, lambda: ["start"])

    parents: dict = {root: None}
    depths: dict = {root: 0}
    frontier = deque([root])
    explored = 0
    partial = False

    def trace_of(state: _SysState, move_label: str | None = None) -> list[str]:
        steps: list[str] = []
        cur = state
        while parents[cur] is not None:
            parent, label = parents[cur]
            steps.append(label)
            cur = parent
        steps.reverse()
        steps.insert(0, "battery low")
        if move_label is not None:
            steps.append(move_label)
        return steps

    while frontier:
        state = frontier.popleft()
        explored += 1
        moves = _enabled_moves(state, loss_budget)
        if not moves:
            terminals[_classify_terminal(state)] += 1
            if _classify_terminal(state) == "deadlock":
                violations.append(Violation("deadlock", "no enabled move",
                                            trace_of(state)))
            continue
        if depths[state] >= depth_bound:
            nonterminating += 1
            continue
        for label, side, event in moves:
            step_violations: list[Violation] = []
            nxt = _apply_move(state, side, event, cfg, step_violations,
                              lambda lb=label, st=state: trace_of(st, lb))
            if step_violations:
                for v in step_violations:
                    if len(violations) < max_violations:
                        violations.append(v)
            if nxt not in parents:
                parents[nxt] = (state, label)
                depths[nxt] = depths[state] + 1
                frontier.append(nxt)
                if len(parents) > state_cap:
                    partial = True
                    frontier.clear()
                    break

    return CheckResult(
        states_explored=explored,
        terminals=terminals,
        violations=violations,
        nonterminating=nonterminating,
        partial=partial,
    )
