"""Simulated core elements: target server, HSS, MME, PCRF, attack box.

Every element is one simulation node handler built around the same
pipeline: decode strictly, validate requests against the dictionary,
feed the peer state machine, and hand application requests to a
capacity model before the element-specific command handler runs.

The capacity model is a token-rate server (service_rate tokens per
second, burst of one) in front of a bounded FIFO queue. A 1 Hz sampler
watches the queue: once it has been non-empty at every sample for
failure_threshold_s consecutive seconds the element marks itself failed
and answers nothing for the rest of the run. That makes overload and
failure directly observable and checkable against a fluid model.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Optional

from . import dictionary as dct
from .codec import (
    Avp,
    Dictionary,
    Message,
    ParseError,
    ViolationKind,
    build_answer,
    build_message,
    decode_message,
    encode_message,
    first_avp,
    validate_message,
)
from .peer import (
    ActionKind,
    EventKind,
    PeerAction,
    PeerConfig,
    PeerEvent,
    PeerState,
    PendingRequest,
    Phase,
    handle_event,
    register_request,
)
from .simnet import NodeId, Simulation, TopologySpec, US_PER_S, build_topology

TPS_PER_MILLION_SUBSCRIBERS = 235_000
DEFAULT_QOS_CLASS = 9
DEFAULT_REQUEST_TIMEOUT_US = 2 * US_PER_S
SAMPLE_INTERVAL_US = US_PER_S  # overload sampling runs at 1 Hz


def required_tps(subscribers: int) -> Fraction:
    """Signaling transactions per second needed for a subscriber base.

    Linear model: 235,000 TPS per million subscribers. Returns an exact
    rational so that required_tps(a + b) == required_tps(a) + required_tps(b)
    holds without floating-point slack.
    """
    if subscribers < 0:
        raise ValueError("subscriber count must be >= 0")
    return Fraction(TPS_PER_MILLION_SUBSCRIBERS * subscribers, 1_000_000)


class ElementKind(Enum):
    TARGET_SERVER = "TargetServer"
    HSS = "HSS"
    MME = "MME"
    PCRF = "PCRF"
    ATTACK_BOX = "AttackBox"


# Lower value opens the peer connection on a link.
_INITIATOR_PRIORITY = {
    ElementKind.ATTACK_BOX: 0,
    ElementKind.MME: 1,
    ElementKind.TARGET_SERVER: 2,
    ElementKind.HSS: 3,
    ElementKind.PCRF: 4,
}


@dataclass(frozen=True)
class ElementCapacity:
    service_rate: float = 1000.0  # transactions per second
    queue_capacity: int = 100
    failure_threshold_s: float = 3600.0

    def __post_init__(self) -> None:
        if self.service_rate <= 0:
            raise ValueError("service_rate must be > 0")
        if self.queue_capacity < 0:
            raise ValueError("queue_capacity must be >= 0")
        if self.failure_threshold_s <= 0:
            raise ValueError("failure_threshold_s must be > 0")


@dataclass
class SubscriberRecord:
    subscriber_id: str
    location: str
    profile: dict[str, str] = field(default_factory=dict)


@dataclass
class PolicyRule:
    rule_id: str
    subscriber_id: str
    qos_class: int


class Admission(Enum):
    ACCEPTED = "accepted"
    QUEUED = "queued"
    DROPPED = "dropped"


class ElementFailedError(RuntimeError):
    """Admission was asked of an element that already marked itself failed."""


def element_admit(elem: "Element", request: object, now: int) -> Admission:
    """Admission decision for one inbound transaction at `now`.

    Accepted requests consume a token and are served immediately; queued
    ones wait for the drain timer; everything else is dropped.
    """
    return elem.admit(request, now)


@dataclass
class PeerLink:
    neighbor: NodeId
    state: PeerState = field(default_factory=PeerState)


def _result_avp(code: int) -> Avp:
    return Avp(code=dct.AVP_RESULT_CODE, data=code.to_bytes(4, "big"), mandatory=True)


def _error_answer(req: Message, result_code: int) -> Message:
    return build_answer(req, avps=[_result_avp(result_code)], error=result_code >= 3000)


def result_code_of(msg: Message) -> Optional[int]:
    avp = first_avp(msg, dct.AVP_RESULT_CODE)
    if avp is None or len(avp.data) != 4:
        return None
    return int.from_bytes(avp.data, "big")


def _event_kind_for(msg: Message) -> EventKind:
    cmd, req = msg.header.command_code, msg.header.request
    if cmd == dct.CMD_CAPABILITIES_EXCHANGE:
        return EventKind.RCV_CER if req else EventKind.RCV_CEA
    if cmd == dct.CMD_DEVICE_WATCHDOG:
        return EventKind.RCV_DWR if req else EventKind.RCV_DWA
    if cmd == dct.CMD_DISCONNECT_PEER:
        return EventKind.RCV_DPR if req else EventKind.RCV_DPA
    return EventKind.RCV_REQUEST if req else EventKind.RCV_ANSWER


class Element:
    """Base node behavior: codec front line, peer FSM, capacity model."""

    kind = ElementKind.TARGET_SERVER

    def __init__(
        self,
        node: NodeId,
        sim: Simulation,
        dictionary: Dictionary,
        capacity: ElementCapacity | None = None,
        peer_config: PeerConfig | None = None,
        request_timeout_us: int = DEFAULT_REQUEST_TIMEOUT_US,
    ):
        self.node = node
        self.sim = sim
        self.dictionary = dictionary
        self.capacity = capacity or ElementCapacity()
        self.peer_config = peer_config or PeerConfig(identity=f"{node.label}.lab")
        self.request_timeout_us = request_timeout_us
        self.links: dict[int, PeerLink] = {}

        # token-rate service state
        self._tokens = 1.0
        self._last_accrual = 0
        self._drain_scheduled = False
        self.queue: deque[tuple[int, Message]] = deque()

        # failure state
        self.failed = False
        self.failed_at: Optional[int] = None
        self._overload_streak = 0

        # counters
        self.rx_messages = 0
        self.parse_drops = 0
        self.validation_rejects = 0
        self.fsm_drops = 0
        self.offered = 0
        self.served = 0
        self.direct_served = 0
        self.drained_served = 0
        self.queued_total = 0
        self.dropped_overflow = 0
        self.dropped_at_failure = 0
        self.dropped_failed_inbound = 0
        self.stray_answers = 0

    # -- wiring --------------------------------------------------------------

    def add_link(self, neighbor: NodeId) -> None:
        self.links[neighbor.id] = PeerLink(neighbor=neighbor)

    def peer_link(self, neighbor: NodeId) -> PeerLink:
        return self.links[neighbor.id]

    def start_sampler(self) -> None:
        self.sim.schedule_timer(self.sim.clock + SAMPLE_INTERVAL_US, self.node, ("sample",))

    # -- peer FSM driving ------------------------------------------------------

    def feed_event(self, sim: Simulation, peer: NodeId, event: PeerEvent, now: int) -> None:
        link = self.links[peer.id]
        prev_deadline = link.state.watchdog_deadline
        new_state, actions = handle_event(link.state, event, now, self.peer_config)
        link.state = new_state
        for action in actions:
            self._execute(sim, link, action, now)
        state = link.state
        if state.phase is Phase.OPEN and state.watchdog_deadline != prev_deadline:
            sim.schedule_timer(state.watchdog_deadline, self.node, ("watchdog", peer.id))

    def _execute(self, sim: Simulation, link: PeerLink, action: PeerAction, now: int) -> None:
        kind = action.kind
        if kind in (
            ActionKind.SEND_CER,
            ActionKind.SEND_CEA,
            ActionKind.SEND_DWR,
            ActionKind.SEND_DWA,
            ActionKind.SEND_DPR,
            ActionKind.SEND_DPA,
        ):
            sim.send(self.node, link.neighbor, encode_message(action.message))
        elif kind is ActionKind.DELIVER_TO_APP:
            msg = action.message
            if msg.header.request:
                self._admit_request(sim, link, msg, now)
            else:
                self.on_app_answer(sim, link, action.pending, msg, now)
        elif kind is ActionKind.DROP_MESSAGE:
            self.fsm_drops += 1
        elif kind is ActionKind.CLOSE_LINK:
            pass  # transport is modeled as always-up; nothing to tear down

    # -- simnet handler protocol -----------------------------------------------

    def on_message(self, sim: Simulation, src: NodeId, data: bytes, now: int) -> None:
        self.rx_messages += 1
        if self.failed:
            self.dropped_failed_inbound += 1
            return
        msg = decode_message(data)
        if isinstance(msg, ParseError):
            self.parse_drops += 1
            return
        if msg.header.request:
            violations = validate_message(msg, self.dictionary)
            if violations:
                self.validation_rejects += 1
                if any(v.kind is ViolationKind.UNSUPPORTED_MANDATORY_AVP for v in violations):
                    code = dct.RESULT_UNSUPPORTED_MANDATORY_AVP
                else:
                    code = dct.RESULT_INVALID_AVP_LENGTH
                sim.send(self.node, src, encode_message(_error_answer(msg, code)))
                return
        self.feed_event(sim, src, PeerEvent(_event_kind_for(msg), msg), now)

    def on_timer(self, sim: Simulation, tag: object, now: int) -> None:
        kind = tag[0]
        if kind == "watchdog":
            peer_id = tag[1]
            link = self.links.get(peer_id)
            if link is not None and not self.failed:
                self.feed_event(sim, link.neighbor, PeerEvent(EventKind.WATCHDOG_TIMER), now)
        elif kind == "drain":
            self._drain(sim, now)
        elif kind == "sample":
            self._sample(sim, now)
        else:
            self.on_custom_timer(sim, tag, now)

    def on_custom_timer(self, sim: Simulation, tag: object, now: int) -> None:
        pass

    # -- capacity model ----------------------------------------------------------

    def _accrue(self, now: int) -> None:
        if now > self._last_accrual:
            gained = self.capacity.service_rate * (now - self._last_accrual) / US_PER_S
            self._tokens = min(1.0, self._tokens + gained)
            self._last_accrual = now

    def admit(self, request: object, now: int) -> Admission:
        if self.failed:
            raise ElementFailedError(f"{self.node.label} has failed; it admits nothing")
        self.offered += 1
        self._accrue(now)
        if self._tokens >= 1.0 and not self.queue:
            self._tokens -= 1.0
            return Admission.ACCEPTED
        if len(self.queue) < self.capacity.queue_capacity:
            self.queue.append(request)
            self.queued_total += 1
            self._ensure_drain(now)
            return Admission.QUEUED
        self.dropped_overflow += 1
        return Admission.DROPPED

    def _ensure_drain(self, now: int) -> None:
        if self._drain_scheduled:
            return
        need = max(0.0, 1.0 - self._tokens)
        delay = max(1, math.ceil(need * US_PER_S / self.capacity.service_rate))
        self.sim.schedule_timer(now + delay, self.node, ("drain",))
        self._drain_scheduled = True

    def _drain(self, sim: Simulation, now: int) -> None:
        self._drain_scheduled = False
        if self.failed:
            return
        self._accrue(now)
        while self._tokens >= 1.0 and self.queue:
            self._tokens -= 1.0
            neighbor_id, msg = self.queue.popleft()
            self.drained_served += 1
            self._serve(sim, neighbor_id, msg, now)
        if self.queue:
            self._ensure_drain(now)

    def _sample(self, sim: Simulation, now: int) -> None:
        if self.failed:
            return
        if self.queue:
            self._overload_streak += 1
        else:
            self._overload_streak = 0
        if self._overload_streak >= math.ceil(self.capacity.failure_threshold_s):
            self.failed = True
            self.failed_at = now
            self.dropped_at_failure += len(self.queue)
            self.queue.clear()
            return
        sim.schedule_timer(now + SAMPLE_INTERVAL_US, self.node, ("sample",))

    def _admit_request(self, sim: Simulation, link: PeerLink, msg: Message, now: int) -> None:
        outcome = self.admit((link.neighbor.id, msg), now)
        if outcome is Admission.ACCEPTED:
            self.direct_served += 1
            self._serve(sim, link.neighbor.id, msg, now)

    def _serve(self, sim: Simulation, neighbor_id: int, msg: Message, now: int) -> None:
        answer = self.handle_app_request(msg, now)
        if answer is not None:
            self.served += 1
            sim.send(self.node, self.links[neighbor_id].neighbor, encode_message(answer))

    # -- application layer ---------------------------------------------------------

    def handle_app_request(self, msg: Message, now: int) -> Optional[Message]:
        return _error_answer(msg, dct.RESULT_COMMAND_UNSUPPORTED)

    def on_app_answer(
        self,
        sim: Simulation,
        link: PeerLink,
        pending: Optional[PendingRequest],
        msg: Message,
        now: int,
    ) -> None:
        self.stray_answers += 1

    # -- client-side sending ----------------------------------------------------------

    def _alloc_hop_by_hop(self, link: PeerLink) -> int:
        hbh = link.state.next_hop_by_hop
        link.state = replace(link.state, next_hop_by_hop=hbh + 1)
        return hbh

    def alloc_hop_by_hop(self, dst: NodeId) -> int:
        return self._alloc_hop_by_hop(self.links[dst.id])

    def send_app_request(
        self,
        sim: Simulation,
        dst: NodeId,
        command_code: int,
        avps: list[Avp],
        context: object,
        now: int,
    ) -> Optional[int]:
        """Build, register, and send one application request; None if the link is not Open."""
        link = self.links[dst.id]
        if link.state.phase is not Phase.OPEN:
            return None
        hbh = self._alloc_hop_by_hop(link)
        msg = build_message(
            command_code, request=True, hop_by_hop_id=hbh, end_to_end_id=hbh, avps=avps
        )
        link.state = register_request(
            link.state, PendingRequest(hbh, command_code, now, context)
        )
        sim.send(self.node, dst, encode_message(msg))
        return hbh

    def send_raw_request(
        self,
        sim: Simulation,
        dst: NodeId,
        data: bytes,
        hop_by_hop_id: int,
        command_code: int,
        context: object,
        now: int,
    ) -> bool:
        """Send pre-encoded (possibly malformed) bytes, still tracked as pending."""
        link = self.links[dst.id]
        if link.state.phase is not Phase.OPEN:
            return False
        link.state = register_request(
            link.state, PendingRequest(hop_by_hop_id, command_code, now, context)
        )
        sim.send(self.node, dst, data)
        return True

    def forget_pending(self, dst: NodeId, hop_by_hop_id: int) -> bool:
        return self.forget_pending_many(dst, (hop_by_hop_id,)) == 1

    def forget_pending_many(self, dst: NodeId, hop_by_hop_ids) -> int:
        """Reclaim abandoned pending entries in one pass; returns how many existed."""
        link = self.links[dst.id]
        doomed = set(hop_by_hop_ids) & link.state.pending.keys()
        if not doomed:
            return 0
        remaining = {
            hbh: entry for hbh, entry in link.state.pending.items() if hbh not in doomed
        }
        link.state = replace(link.state, pending=remaining)
        return len(doomed)


class TargetServerElement(Element):
    """The standalone fuzzing and flooding target."""

    kind = ElementKind.TARGET_SERVER

    def handle_app_request(self, msg: Message, now: int) -> Optional[Message]:
        if msg.header.command_code == dct.CMD_ECHO:
            payload = [a for a in msg.avps if a.code == dct.AVP_ECHO_PAYLOAD]
            return build_answer(msg, avps=[_result_avp(dct.RESULT_SUCCESS)] + payload)
        return _error_answer(msg, dct.RESULT_COMMAND_UNSUPPORTED)


class HssElement(Element):
    """Subscriber store: profile queries and location updates."""

    kind = ElementKind.HSS

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.store: dict[str, SubscriberRecord] = {}

    def seed_subscribers(self, subscribers: list[SubscriberRecord]) -> None:
        for sub in subscribers:
            if sub.subscriber_id in self.store:
                raise ValueError(f"duplicate subscriber id {sub.subscriber_id!r}")
            self.store[sub.subscriber_id] = SubscriberRecord(
                subscriber_id=sub.subscriber_id,
                location=sub.location,
                profile=dict(sub.profile),
            )

    def handle_app_request(self, msg: Message, now: int) -> Optional[Message]:
        cmd = msg.header.command_code
        if cmd == dct.CMD_PROFILE_QUERY:
            sid_avp = first_avp(msg, dct.AVP_SUBSCRIBER_ID)
            if sid_avp is None:
                return _error_answer(msg, dct.RESULT_MISSING_AVP)
            rec = self.store.get(sid_avp.data.decode("utf-8", "replace"))
            if rec is None:
                return _error_answer(msg, dct.RESULT_USER_UNKNOWN)
            avps = [
                _result_avp(dct.RESULT_SUCCESS),
                Avp(code=dct.AVP_SUBSCRIBER_ID, data=rec.subscriber_id.encode(), mandatory=True),
                Avp(code=dct.AVP_LOCATION, data=rec.location.encode(), mandatory=True),
            ]
            for key in sorted(rec.profile):
                avps.append(
                    Avp(
                        code=dct.AVP_PROFILE_ATTRIBUTE,
                        data=f"{key}={rec.profile[key]}".encode(),
                    )
                )
            return build_answer(msg, avps=avps)
        if cmd == dct.CMD_LOCATION_UPDATE:
            sid_avp = first_avp(msg, dct.AVP_SUBSCRIBER_ID)
            loc_avp = first_avp(msg, dct.AVP_LOCATION)
            if sid_avp is None or loc_avp is None:
                return _error_answer(msg, dct.RESULT_MISSING_AVP)
            rec = self.store.get(sid_avp.data.decode("utf-8", "replace"))
            if rec is None:
                return _error_answer(msg, dct.RESULT_USER_UNKNOWN)
            rec.location = loc_avp.data.decode("utf-8", "replace")
            return build_answer(msg, avps=[_result_avp(dct.RESULT_SUCCESS)])
        return _error_answer(msg, dct.RESULT_COMMAND_UNSUPPORTED)


class PcrfElement(Element):
    """Policy rule store: install-once semantics per rule id."""

    kind = ElementKind.PCRF

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.rules: dict[str, PolicyRule] = {}

    def seed_rules(self, rules: list[PolicyRule]) -> None:
        for rule in rules:
            if rule.rule_id in self.rules:
                raise ValueError(f"duplicate rule id {rule.rule_id!r}")
            self.rules[rule.rule_id] = PolicyRule(rule.rule_id, rule.subscriber_id, rule.qos_class)

    def handle_app_request(self, msg: Message, now: int) -> Optional[Message]:
        if msg.header.command_code != dct.CMD_POLICY_INSTALL:
            return _error_answer(msg, dct.RESULT_COMMAND_UNSUPPORTED)
        rule_avp = first_avp(msg, dct.AVP_RULE_ID)
        sid_avp = first_avp(msg, dct.AVP_SUBSCRIBER_ID)
        qos_avp = first_avp(msg, dct.AVP_QOS_CLASS)
        if rule_avp is None or sid_avp is None or qos_avp is None:
            return _error_answer(msg, dct.RESULT_MISSING_AVP)
        rule_id = rule_avp.data.decode("utf-8", "replace")
        if rule_id in self.rules:
            return _error_answer(msg, dct.RESULT_DUPLICATE_RULE)
        self.rules[rule_id] = PolicyRule(
            rule_id=rule_id,
            subscriber_id=sid_avp.data.decode("utf-8", "replace"),
            qos_class=int.from_bytes(qos_avp.data, "big"),
        )
        return build_answer(msg, avps=[_result_avp(dct.RESULT_SUCCESS)])


@dataclass
class AttachResult:
    subscriber_id: str
    success: Optional[bool] = None  # None while in progress
    reason: str = ""
    started_at: int = 0
    finished_at: Optional[int] = None
    steps_completed: int = 0


class MmeElement(Element):
    """Attach coordinator: drives HSS and PCRF through the scripted flow."""

    kind = ElementKind.MME

    _STEPS = ("location-update", "profile-query", "policy-install")

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.hss_node: Optional[NodeId] = None
        self.pcrf_node: Optional[NodeId] = None
        self.attaches: list[AttachResult] = []
        self._locations: dict[int, str] = {}  # attach index -> target tracking area

    def start_attach(self, sim: Simulation, subscriber_id: str, location: str, now: int) -> AttachResult:
        if self.hss_node is None or self.pcrf_node is None:
            raise ValueError("attach requires HSS and PCRF in the topology")
        run = AttachResult(subscriber_id=subscriber_id, started_at=now)
        self.attaches.append(run)
        self._locations[len(self.attaches) - 1] = location
        self._send_step(sim, len(self.attaches) - 1, now)
        return run

    def _send_step(self, sim: Simulation, run_idx: int, now: int) -> None:
        run = self.attaches[run_idx]
        step = run.steps_completed
        sid = Avp(code=dct.AVP_SUBSCRIBER_ID, data=run.subscriber_id.encode(), mandatory=True)
        if step == 0:
            dst, cmd = self.hss_node, dct.CMD_LOCATION_UPDATE
            avps = [
                sid,
                Avp(
                    code=dct.AVP_LOCATION,
                    data=self._locations[run_idx].encode(),
                    mandatory=True,
                ),
            ]
        elif step == 1:
            dst, cmd = self.hss_node, dct.CMD_PROFILE_QUERY
            avps = [sid]
        else:
            dst, cmd = self.pcrf_node, dct.CMD_POLICY_INSTALL
            avps = [
                Avp(
                    code=dct.AVP_RULE_ID,
                    data=f"attach-{run.subscriber_id}".encode(),
                    mandatory=True,
                ),
                sid,
                Avp(
                    code=dct.AVP_QOS_CLASS,
                    data=DEFAULT_QOS_CLASS.to_bytes(4, "big"),
                    mandatory=True,
                ),
            ]
        sent = self.send_app_request(sim, dst, cmd, avps, ("attach", run_idx, step), now)
        if sent is None:
            self._finish(run, False, "link-not-open", now)
            return
        sim.schedule_timer(now + self.request_timeout_us, self.node, ("attach-timeout", run_idx, step))

    def _finish(self, run: AttachResult, success: bool, reason: str, now: int) -> None:
        run.success = success
        run.reason = reason
        run.finished_at = now

    def on_app_answer(self, sim, link, pending, msg, now):
        ctx = pending.context
        if not (isinstance(ctx, tuple) and ctx and ctx[0] == "attach"):
            self.stray_answers += 1
            return
        _, run_idx, step = ctx
        run = self.attaches[run_idx]
        if run.success is not None or run.steps_completed != step:
            return  # stale answer after a timeout already decided this run
        code = result_code_of(msg)
        if code == dct.RESULT_SUCCESS:
            run.steps_completed += 1
            if run.steps_completed == len(self._STEPS):
                self._finish(run, True, "", now)
            else:
                self._send_step(sim, run_idx, now)
        else:
            name = dct.RESULT_NAMES.get(code, str(code))
            self._finish(run, False, name, now)

    def on_custom_timer(self, sim: Simulation, tag: object, now: int) -> None:
        if tag[0] != "attach-timeout":
            return
        _, run_idx, step = tag
        run = self.attaches[run_idx]
        if run.success is None and run.steps_completed == step:
            self._finish(run, False, "timeout", now)


class AttackBoxElement(Element):
    """Attack traffic source; the active attack driver plugs in here."""

    kind = ElementKind.ATTACK_BOX

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.driver: Optional[object] = None  # exposes on_answer / on_timer

    def on_message(self, sim: Simulation, src: NodeId, data: bytes, now: int) -> None:
        # Drivers that watch the raw socket (the fuzzer) see every inbound
        # answer before peer-FSM routing: answers to mutated base-protocol
        # requests come back as CEA/DWA/DPA and never reach the app layer.
        hook = getattr(self.driver, "on_wire_answer", None)
        if hook is not None and not self.failed:
            msg = decode_message(data)
            if isinstance(msg, Message) and not msg.header.request:
                hook(msg, now)
        super().on_message(sim, src, data, now)

    def on_app_answer(self, sim, link, pending, msg, now):
        if self.driver is not None:
            self.driver.on_answer(sim, pending, msg, now)
        else:
            self.stray_answers += 1

    def on_custom_timer(self, sim: Simulation, tag: object, now: int) -> None:
        if self.driver is not None:
            self.driver.on_timer(sim, tag, now)


_ELEMENT_CLASSES: dict[ElementKind, type[Element]] = {
    ElementKind.TARGET_SERVER: TargetServerElement,
    ElementKind.HSS: HssElement,
    ElementKind.MME: MmeElement,
    ElementKind.PCRF: PcrfElement,
    ElementKind.ATTACK_BOX: AttackBoxElement,
}


class LabError(RuntimeError):
    """The lab could not be built or brought to a runnable state."""


class Lab:
    """A running testbed: simulation plus the elements wired onto it."""

    def __init__(
        self,
        sim: Simulation,
        elements: dict[str, Element],
        dictionary: Dictionary,
        subscribers: list[SubscriberRecord],
        request_timeout_us: int = DEFAULT_REQUEST_TIMEOUT_US,
    ):
        self.sim = sim
        self.elements = elements
        self.dictionary = dictionary
        self.subscribers = subscribers
        self.request_timeout_us = request_timeout_us

    @classmethod
    def build(
        cls,
        topology: TopologySpec,
        kinds: dict[str, ElementKind],
        capacities: dict[str, ElementCapacity] | None = None,
        subscribers: list[SubscriberRecord] | None = None,
        rules: list[PolicyRule] | None = None,
        seed: int = 0,
        watchdog_interval_s: float = 30.0,
        request_timeout_s: float = 2.0,
    ) -> "Lab":
        sim = build_topology(topology, seed=seed)
        dictionary = dct.builtin_dictionary()
        capacities = capacities or {}
        subscribers = subscribers or []
        rules = rules or []
        timeout_us = int(round(request_timeout_s * US_PER_S))
        elements: dict[str, Element] = {}
        for node in sim.nodes:
            kind = kinds.get(node.label)
            if kind is None:
                raise LabError(f"node {node.label!r} has no element kind")
            peer_config = PeerConfig(
                identity=f"{node.label}.lab",
                watchdog_interval_us=int(round(watchdog_interval_s * US_PER_S)),
            )
            elem = _ELEMENT_CLASSES[kind](
                node,
                sim,
                dictionary,
                capacity=capacities.get(node.label),
                peer_config=peer_config,
                request_timeout_us=timeout_us,
            )
            elements[node.label] = elem
            sim.register_handler(node, elem)
        for link in sim.links.values():
            ea = elements[link.a.label]
            eb = elements[link.b.label]
            ea.add_link(link.b)
            eb.add_link(link.a)
        hss = next((e for e in elements.values() if isinstance(e, HssElement)), None)
        pcrf = next((e for e in elements.values() if isinstance(e, PcrfElement)), None)
        if hss is not None:
            hss.seed_subscribers(subscribers)
        if pcrf is not None:
            pcrf.seed_rules(rules)
        for elem in elements.values():
            if isinstance(elem, MmeElement):
                if hss is not None:
                    elem.hss_node = hss.node
                if pcrf is not None:
                    elem.pcrf_node = pcrf.node
            elem.start_sampler()
        return cls(sim, elements, dictionary, list(subscribers), timeout_us)

    # -- lookups ------------------------------------------------------------

    def element(self, label: str) -> Element:
        try:
            return self.elements[label]
        except KeyError:
            raise LabError(f"no element labeled {label!r}") from None

    def node(self, label: str) -> NodeId:
        return self.element(label).node

    def first_of_kind(self, kind: ElementKind) -> Optional[Element]:
        for node in self.sim.nodes:  # node order, deterministic
            elem = self.elements[node.label]
            if elem.kind is kind:
                return elem
        return None

    def attack_box(self) -> AttackBoxElement:
        elem = self.first_of_kind(ElementKind.ATTACK_BOX)
        if elem is None:
            raise LabError("topology has no AttackBox element")
        return elem

    def max_latency_us(self) -> int:
        if not self.sim.links:
            return 0
        return max(l.latency_us for l in self.sim.links.values())

    # -- lifecycle ------------------------------------------------------------

    def bring_links_open(self) -> None:
        """Run capabilities exchange on every link; abort if any fails to open."""
        sim = self.sim
        for key in sorted(self.sim.links):
            link = self.sim.links[key]
            ea, eb = self.elements[link.a.label], self.elements[link.b.label]
            initiator = min(
                (ea, eb), key=lambda e: (_INITIATOR_PRIORITY[e.kind], e.node.id)
            )
            responder = eb if initiator is ea else ea
            initiator.feed_event(sim, responder.node, PeerEvent(EventKind.START), sim.clock)
            initiator.feed_event(sim, responder.node, PeerEvent(EventKind.CONN_ACK), sim.clock)
        sim.run_until(sim.clock + 2 * self.max_latency_us() + 10_000)
        for key in sorted(self.sim.links):
            link = self.sim.links[key]
            for end, other in ((link.a, link.b), (link.b, link.a)):
                state = self.elements[end.label].peer_link(other).state
                if state.phase is not Phase.OPEN:
                    raise LabError(
                        f"peer link {link.a.label}<->{link.b.label} failed to open "
                        f"({end.label} side is {state.phase.value})"
                    )

    # -- scenario traffic ----------------------------------------------------------

    def attach_subscriber(self, subscriber: SubscriberRecord) -> AttachResult:
        mme = self.first_of_kind(ElementKind.MME)
        if mme is None:
            raise LabError("attach scenario requires an MME element")
        sim = self.sim
        run = mme.start_attach(sim, subscriber.subscriber_id, subscriber.location, sim.clock)
        deadline = sim.clock + 3 * (self.request_timeout_us + 2 * self.max_latency_us()) + US_PER_S
        while run.success is None:
            nxt = sim.next_event_at()
            if nxt is None or nxt > deadline:
                break
            sim.run_until(nxt)
        if run.success is None:
            run.success = False
            run.reason = "stalled"
        return run

    def attach_all(self) -> list[AttachResult]:
        return [self.attach_subscriber(sub) for sub in self.subscribers]

    def echo_probes(self, count: int = 3) -> None:
        """Minimal background traffic when there is no core to attach against."""
        ab = self.attack_box()
        target = self.first_of_kind(ElementKind.TARGET_SERVER)
        if target is None:
            return
        sim = self.sim
        rtt = 2 * self.max_latency_us() + 10_000
        for i in range(count):
            payload = Avp(code=dct.AVP_ECHO_PAYLOAD, data=f"probe-{i}".encode())
            ab.send_app_request(
                sim, target.node, dct.CMD_ECHO, [payload], ("echo", i), sim.clock
            )
            sim.run_until(sim.clock + rtt)

    def scenario_traffic(self) -> None:
        if self.first_of_kind(ElementKind.MME) is not None and self.subscribers:
            self.attach_all()
        else:
            self.echo_probes()
