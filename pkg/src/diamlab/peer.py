"""Peer link lifecycle: capabilities exchange, watchdog, disconnect, correlation.

One PeerState per link endpoint, advanced exclusively through
`handle_event`, a pure function over the full phase x event table (see
TRANSITION_MATRIX; the same table appears in the README). Application
traffic is delivered only in the Open phase; everywhere else it is
dropped, never an error.

Timestamps are simulation microseconds throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from . import dictionary as dct
from .codec import Avp, Message, build_answer, build_message

US_PER_S = 1_000_000


class Phase(Enum):
    CLOSED = "Closed"
    WAIT_CONN_ACK = "WaitConnAck"
    WAIT_CEA = "WaitCEA"
    OPEN = "Open"
    CLOSING = "Closing"


class EventKind(Enum):
    START = "Start"
    CONN_ACK = "ConnAck"
    RCV_CER = "RcvCER"
    RCV_CEA = "RcvCEA"
    RCV_DWR = "RcvDWR"
    RCV_DWA = "RcvDWA"
    RCV_DPR = "RcvDPR"
    RCV_DPA = "RcvDPA"
    RCV_REQUEST = "RcvRequest"
    RCV_ANSWER = "RcvAnswer"
    WATCHDOG_TIMER = "WatchdogTimer"
    STOP = "Stop"


MESSAGE_EVENTS = frozenset(
    {
        EventKind.RCV_CER,
        EventKind.RCV_CEA,
        EventKind.RCV_DWR,
        EventKind.RCV_DWA,
        EventKind.RCV_DPR,
        EventKind.RCV_DPA,
        EventKind.RCV_REQUEST,
        EventKind.RCV_ANSWER,
    }
)


class ActionKind(Enum):
    SEND_CER = "SendCER"
    SEND_CEA = "SendCEA"
    SEND_DWR = "SendDWR"
    SEND_DWA = "SendDWA"
    SEND_DPR = "SendDPR"
    SEND_DPA = "SendDPA"
    DELIVER_TO_APP = "DeliverToApp"
    DROP_MESSAGE = "DropMessage"
    CLOSE_LINK = "CloseLink"


@dataclass(frozen=True)
class PeerEvent:
    kind: EventKind
    message: Optional[Message] = None

    def __post_init__(self) -> None:
        if (self.message is not None) != (self.kind in MESSAGE_EVENTS):
            raise ValueError(f"event {self.kind.value} message presence mismatch")


@dataclass(frozen=True)
class PendingRequest:
    """Metadata kept for one outstanding application request."""

    hop_by_hop_id: int
    command_code: int
    sent_at: int
    context: object = None


@dataclass(frozen=True)
class PeerAction:
    kind: ActionKind
    message: Optional[Message] = None
    # For DeliverToApp on an answer: the pending entry the answer consumed.
    pending: Optional[PendingRequest] = None


@dataclass(frozen=True)
class PeerConfig:
    identity: str = "peer.lab"
    application_ids: tuple[int, ...] = (0,)
    watchdog_interval_us: int = 30 * US_PER_S
    missed_dwa_limit: int = 2


DEFAULT_CONFIG = PeerConfig()


@dataclass(frozen=True)
class PeerState:
    phase: Phase = Phase.CLOSED
    pending: dict[int, PendingRequest] = field(default_factory=dict)
    watchdog_deadline: int = 0
    dwr_outstanding: bool = False
    missed_dwas: int = 0
    next_hop_by_hop: int = 1


# --- message constructors -------------------------------------------------


def _origin(identity: str) -> Avp:
    return Avp(code=dct.AVP_ORIGIN_HOST, data=identity.encode(), mandatory=True)


def _result(code: int) -> Avp:
    return Avp(code=dct.AVP_RESULT_CODE, data=code.to_bytes(4, "big"), mandatory=True)


def build_cer(
    identity: str,
    application_ids: list[int] | tuple[int, ...],
    *,
    hop_by_hop_id: int = 0,
    end_to_end_id: int = 0,
) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    avps = [_origin(identity)] + [
        Avp(code=dct.AVP_AUTH_APPLICATION_ID, data=a.to_bytes(4, "big"), mandatory=True)
        for a in application_ids
    ]
    return build_message(
        dct.CMD_CAPABILITIES_EXCHANGE,
        request=True,
        hop_by_hop_id=hop_by_hop_id,
        end_to_end_id=end_to_end_id,
        avps=avps,
    )


def build_cea(cer: Message, identity: str, result_code: int = dct.RESULT_SUCCESS) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    return build_answer(cer, avps=[_result(result_code), _origin(identity)])


def build_dwr(identity: str, *, hop_by_hop_id: int = 0, end_to_end_id: int = 0) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    return build_message(
        dct.CMD_DEVICE_WATCHDOG,
        request=True,
        hop_by_hop_id=hop_by_hop_id,
        end_to_end_id=end_to_end_id,
        avps=[_origin(identity)],
    )


def build_dwa(dwr: Message, identity: str, result_code: int = dct.RESULT_SUCCESS) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    return build_answer(dwr, avps=[_result(result_code), _origin(identity)])


def build_dpr(
    identity: str, *, cause: int = 0, hop_by_hop_id: int = 0, end_to_end_id: int = 0
) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    return build_message(
        dct.CMD_DISCONNECT_PEER,
        request=True,
        hop_by_hop_id=hop_by_hop_id,
        end_to_end_id=end_to_end_id,
        avps=[
            _origin(identity),
            Avp(code=dct.AVP_DISCONNECT_CAUSE, data=cause.to_bytes(4, "big"), mandatory=True),
        ],
    )


def build_dpa(dpr: Message, identity: str, result_code: int = dct.RESULT_SUCCESS) -> Message:
    if not identity:
        raise ValueError("identity must be non-empty")
    return build_answer(dpr, avps=[_result(result_code), _origin(identity)])


# --- correlation ----------------------------------------------------------


def register_request(state: PeerState, pending: PendingRequest) -> PeerState:
    """Record an outstanding application request. Only legal while Open."""
    if state.phase is not Phase.OPEN:
        raise ValueError("pending entries are only allowed in the Open phase")
    if pending.hop_by_hop_id in state.pending:
        raise ValueError(f"duplicate outstanding hop-by-hop id {pending.hop_by_hop_id}")
    new_pending = dict(state.pending)
    new_pending[pending.hop_by_hop_id] = pending
    return replace(state, pending=new_pending)


def correlate_answer(
    state: PeerState, answer: Message
) -> tuple[PeerState, Optional[PendingRequest]]:
    """Pop and return the pending entry matching the answer, if any.

    No-match leaves the state unchanged.
    """
    if answer.header.request:
        raise ValueError("correlate_answer expects a message with the request flag clear")
    hbh = answer.header.hop_by_hop_id
    entry = state.pending.get(hbh)
    if entry is None:
        return state, None
    new_pending = dict(state.pending)
    del new_pending[hbh]
    return replace(state, pending=new_pending), entry


# --- the transition function ----------------------------------------------


def _drop(state: PeerState, event: PeerEvent) -> tuple[PeerState, list[PeerAction]]:
    return state, [PeerAction(ActionKind.DROP_MESSAGE, message=event.message)]


def _ignore(state: PeerState, _event: PeerEvent) -> tuple[PeerState, list[PeerAction]]:
    return state, []


def handle_event(
    state: PeerState,
    event: PeerEvent,
    now: int,
    config: PeerConfig = DEFAULT_CONFIG,
) -> tuple[PeerState, list[PeerAction]]:
    """Advance one peer link by one event.

    Total over the phase x event table: unexpected events drop or close,
    they never raise. Answers consume their pending entry; leaving Open
    always clears pending.
    """
    phase, kind = state.phase, event.kind

    if kind is EventKind.START:
        if phase is Phase.CLOSED:
            return replace(state, phase=Phase.WAIT_CONN_ACK), []
        return _ignore(state, event)

    if kind is EventKind.CONN_ACK:
        if phase is Phase.WAIT_CONN_ACK:
            cer = build_cer(
                config.identity,
                config.application_ids,
                hop_by_hop_id=state.next_hop_by_hop,
                end_to_end_id=state.next_hop_by_hop,
            )
            new = replace(
                state, phase=Phase.WAIT_CEA, next_hop_by_hop=state.next_hop_by_hop + 1
            )
            return new, [PeerAction(ActionKind.SEND_CER, message=cer)]
        return _ignore(state, event)

    if kind is EventKind.RCV_CER:
        if phase is Phase.CLOSED:
            cea = build_cea(event.message, config.identity)
            new = replace(
                state,
                phase=Phase.OPEN,
                watchdog_deadline=now + config.watchdog_interval_us,
                dwr_outstanding=False,
                missed_dwas=0,
            )
            return new, [PeerAction(ActionKind.SEND_CEA, message=cea)]
        return _drop(state, event)

    if kind is EventKind.RCV_CEA:
        if phase is Phase.WAIT_CEA:
            new = replace(
                state,
                phase=Phase.OPEN,
                watchdog_deadline=now + config.watchdog_interval_us,
                dwr_outstanding=False,
                missed_dwas=0,
            )
            return new, []
        return _drop(state, event)

    if kind is EventKind.RCV_DWR:
        if phase is Phase.OPEN:
            dwa = build_dwa(event.message, config.identity)
            return state, [PeerAction(ActionKind.SEND_DWA, message=dwa)]
        return _drop(state, event)

    if kind is EventKind.RCV_DWA:
        if phase is Phase.OPEN:
            new = replace(
                state,
                dwr_outstanding=False,
                missed_dwas=0,
                watchdog_deadline=now + config.watchdog_interval_us,
            )
            return new, []
        return _drop(state, event)

    if kind is EventKind.RCV_DPR:
        if phase in (Phase.WAIT_CEA, Phase.OPEN, Phase.CLOSING):
            dpa = build_dpa(event.message, config.identity)
            new = replace(state, phase=Phase.CLOSING, pending={})
            return new, [PeerAction(ActionKind.SEND_DPA, message=dpa)]
        return _drop(state, event)

    if kind is EventKind.RCV_DPA:
        if phase is Phase.CLOSING:
            return replace(state, phase=Phase.CLOSED), [PeerAction(ActionKind.CLOSE_LINK)]
        return _drop(state, event)

    if kind is EventKind.RCV_REQUEST:
        if phase is Phase.OPEN:
            return state, [PeerAction(ActionKind.DELIVER_TO_APP, message=event.message)]
        return _drop(state, event)

    if kind is EventKind.RCV_ANSWER:
        if phase is Phase.OPEN:
            new, entry = correlate_answer(state, event.message)
            if entry is None:
                return _drop(state, event)
            return new, [
                PeerAction(ActionKind.DELIVER_TO_APP, message=event.message, pending=entry)
            ]
        return _drop(state, event)

    if kind is EventKind.WATCHDOG_TIMER:
        if phase is not Phase.OPEN:
            return _ignore(state, event)
        if now < state.watchdog_deadline:
            return _ignore(state, event)  # stale timer from a renewed deadline
        if state.dwr_outstanding:
            missed = state.missed_dwas + 1
            if missed >= config.missed_dwa_limit:
                new = replace(state, phase=Phase.CLOSED, pending={}, dwr_outstanding=False)
                return new, [PeerAction(ActionKind.CLOSE_LINK)]
        else:
            missed = state.missed_dwas
        dwr = build_dwr(
            config.identity,
            hop_by_hop_id=state.next_hop_by_hop,
            end_to_end_id=state.next_hop_by_hop,
        )
        new = replace(
            state,
            dwr_outstanding=True,
            missed_dwas=missed,
            watchdog_deadline=now + config.watchdog_interval_us,
            next_hop_by_hop=state.next_hop_by_hop + 1,
        )
        return new, [PeerAction(ActionKind.SEND_DWR, message=dwr)]

    if kind is EventKind.STOP:
        if phase is Phase.OPEN:
            dpr = build_dpr(
                config.identity,
                hop_by_hop_id=state.next_hop_by_hop,
                end_to_end_id=state.next_hop_by_hop,
            )
            new = replace(
                state,
                phase=Phase.CLOSING,
                pending={},
                next_hop_by_hop=state.next_hop_by_hop + 1,
            )
            return new, [PeerAction(ActionKind.SEND_DPR, message=dpr)]
        if phase in (Phase.WAIT_CONN_ACK, Phase.WAIT_CEA, Phase.CLOSING):
            return replace(state, phase=Phase.CLOSED, pending={}), [
                PeerAction(ActionKind.CLOSE_LINK)
            ]
        return _ignore(state, event)

    raise AssertionError(f"unreachable: {kind}")  # pragma: no cover


# Published phase x event matrix. Cell values: (next phase, action kinds);
# "=" means the phase does not change. Dynamic cells (Open/RcvAnswer,
# Open/WatchdogTimer) list their quiescent-path outcome and are covered by
# dedicated scenario tests.
TRANSITION_MATRIX: dict[tuple[Phase, EventKind], tuple[str, tuple[str, ...]]] = {
    (Phase.CLOSED, EventKind.START): ("WaitConnAck", ()),
    (Phase.CLOSED, EventKind.CONN_ACK): ("=", ()),
    (Phase.CLOSED, EventKind.RCV_CER): ("Open", ("SendCEA",)),
    (Phase.CLOSED, EventKind.RCV_CEA): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_DWR): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_DWA): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_DPR): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_DPA): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_REQUEST): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.RCV_ANSWER): ("=", ("DropMessage",)),
    (Phase.CLOSED, EventKind.WATCHDOG_TIMER): ("=", ()),
    (Phase.CLOSED, EventKind.STOP): ("=", ()),
    (Phase.WAIT_CONN_ACK, EventKind.START): ("=", ()),
    (Phase.WAIT_CONN_ACK, EventKind.CONN_ACK): ("WaitCEA", ("SendCER",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_CER): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_CEA): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_DWR): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_DWA): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_DPR): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_DPA): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_REQUEST): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.RCV_ANSWER): ("=", ("DropMessage",)),
    (Phase.WAIT_CONN_ACK, EventKind.WATCHDOG_TIMER): ("=", ()),
    (Phase.WAIT_CONN_ACK, EventKind.STOP): ("Closed", ("CloseLink",)),
    (Phase.WAIT_CEA, EventKind.START): ("=", ()),
    (Phase.WAIT_CEA, EventKind.CONN_ACK): ("=", ()),
    (Phase.WAIT_CEA, EventKind.RCV_CER): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.RCV_CEA): ("Open", ()),
    (Phase.WAIT_CEA, EventKind.RCV_DWR): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.RCV_DWA): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.RCV_DPR): ("Closing", ("SendDPA",)),
    (Phase.WAIT_CEA, EventKind.RCV_DPA): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.RCV_REQUEST): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.RCV_ANSWER): ("=", ("DropMessage",)),
    (Phase.WAIT_CEA, EventKind.WATCHDOG_TIMER): ("=", ()),
    (Phase.WAIT_CEA, EventKind.STOP): ("Closed", ("CloseLink",)),
    (Phase.OPEN, EventKind.START): ("=", ()),
    (Phase.OPEN, EventKind.CONN_ACK): ("=", ()),
    (Phase.OPEN, EventKind.RCV_CER): ("=", ("DropMessage",)),
    (Phase.OPEN, EventKind.RCV_CEA): ("=", ("DropMessage",)),
    (Phase.OPEN, EventKind.RCV_DWR): ("=", ("SendDWA",)),
    (Phase.OPEN, EventKind.RCV_DWA): ("=", ()),
    (Phase.OPEN, EventKind.RCV_DPR): ("Closing", ("SendDPA",)),
    (Phase.OPEN, EventKind.RCV_DPA): ("=", ("DropMessage",)),
    (Phase.OPEN, EventKind.RCV_REQUEST): ("=", ("DeliverToApp",)),
    (Phase.OPEN, EventKind.RCV_ANSWER): ("=", ("DropMessage",)),  # no pending match
    (Phase.OPEN, EventKind.WATCHDOG_TIMER): ("=", ()),  # before the deadline
    (Phase.OPEN, EventKind.STOP): ("Closing", ("SendDPR",)),
    (Phase.CLOSING, EventKind.START): ("=", ()),
    (Phase.CLOSING, EventKind.CONN_ACK): ("=", ()),
    (Phase.CLOSING, EventKind.RCV_CER): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.RCV_CEA): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.RCV_DWR): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.RCV_DWA): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.RCV_DPR): ("=", ("SendDPA",)),
    (Phase.CLOSING, EventKind.RCV_DPA): ("Closed", ("CloseLink",)),
    (Phase.CLOSING, EventKind.RCV_REQUEST): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.RCV_ANSWER): ("=", ("DropMessage",)),
    (Phase.CLOSING, EventKind.WATCHDOG_TIMER): ("=", ()),
    (Phase.CLOSING, EventKind.STOP): ("Closed", ("CloseLink",)),
}
