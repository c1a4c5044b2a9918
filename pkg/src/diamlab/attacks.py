"""Attack engine: transaction flooding, passive interception, mutation fuzzing.

Each runner takes a built Lab and an attack spec, drives the simulation,
and returns a structured result plus zero or more Findings. Findings
leave here without taxonomy labels; the campaign layer classifies them.

Fuzzing is mutation-based over a seed corpus of the testbed's own valid
messages. Mutations are deterministic functions of (bytes, op, draw),
so a fuzz run is fully reproducible from its seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from . import dictionary as dct
from .codec import (
    Avp,
    Message,
    ParseError,
    build_message,
    decode_message,
    encode_message,
    replace_ids,
)
from .elements import AttackBoxElement, Element, Lab, result_code_of
from .peer import build_cer, build_dwr
from .simnet import CaptureRecord, US_PER_S
from .taxonomy import TaxonomyLabel


class Severity(Enum):
    INFO = "info"
    DEGRADED = "degraded"
    OUTAGE = "outage"
    EXPOSURE = "exposure"


@dataclass
class Finding:
    attack_kind: str  # "flood" | "intercept" | "fuzz"
    severity: Severity
    evidence: dict
    id: int = 0
    taxonomy: Optional[TaxonomyLabel] = None

    def __post_init__(self) -> None:
        if not self.evidence:
            raise ValueError("a finding must carry evidence")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "attack_kind": self.attack_kind,
            "severity": self.severity.value,
            "evidence": self.evidence,
            "taxonomy": self.taxonomy.to_dict() if self.taxonomy else None,
        }


# --- attack specs -----------------------------------------------------------


@dataclass(frozen=True)
class FloodSpec:
    target: str
    rate_tps: float
    duration_s: float
    degraded_answer_ratio: float = 0.95
    settle_grace_s: float = 2.0

    def __post_init__(self) -> None:
        if self.rate_tps <= 0:
            raise ValueError("flood rate must be > 0")
        if self.duration_s <= 0:
            raise ValueError("flood duration must be > 0")


@dataclass(frozen=True)
class InterceptSpec:
    link: tuple[str, str]
    avp_codes: tuple[int, ...]


class MutationOp(Enum):
    FLIP_FLAG = "flip_flag"
    SET_MANDATORY_UNKNOWN_AVP = "set_mandatory_unknown_avp"
    TRUNCATE = "truncate"
    INFLATE_LENGTH = "inflate_length"
    CORRUPT_VERSION = "corrupt_version"
    SHUFFLE_AVPS = "shuffle_avps"
    ZERO_LENGTH_AVP = "zero_length_avp"


ALL_MUTATION_OPS = tuple(MutationOp)


@dataclass(frozen=True)
class FuzzSpec:
    target: str
    case_count: int
    ops: tuple[MutationOp, ...] = ALL_MUTATION_OPS
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.case_count <= 0:
            raise ValueError("fuzz case count must be > 0")
        if not self.ops:
            raise ValueError("fuzz op set must be non-empty")


AttackSpec = FloodSpec | InterceptSpec | FuzzSpec


# --- mutation operators ------------------------------------------------------

_HEADER_FLAG_BITS = (0x80, 0x40, 0x20, 0x10)
_UNKNOWN_AVP_CODE_BASE = 900_000


def _patch_declared_length(data: bytearray, delta: int) -> bool:
    if len(data) < 4:
        return False
    declared = int.from_bytes(data[1:4], "big") + delta
    if not 0 <= declared <= 0xFFFFFF:
        return False
    data[1:4] = declared.to_bytes(3, "big")
    return True


def _mut_flip_flag(data: bytes, draw: int) -> bytes:
    if len(data) < 5:
        return data
    out = bytearray(data)
    out[4] ^= _HEADER_FLAG_BITS[draw % 4]
    return bytes(out)


def _mut_corrupt_version(data: bytes, draw: int) -> bytes:
    if not data:
        return data
    out = bytearray(data)
    out[0] = 2 + draw % 254  # anything but 0 and 1
    return bytes(out)


def _mut_truncate(data: bytes, draw: int) -> bytes:
    if len(data) <= 1:
        return data
    cut = 1 + draw % min(len(data) - 1, 8)
    return data[: len(data) - cut]


def _mut_inflate_length(data: bytes, draw: int) -> bytes:
    out = bytearray(data)
    if not _patch_declared_length(out, 4 * (1 + draw % 4)):
        return data
    return bytes(out)


def _mut_set_mandatory_unknown_avp(data: bytes, draw: int) -> bytes:
    code = _UNKNOWN_AVP_CODE_BASE + draw % 100_000
    avp = encode_avp_raw(code, 0x40, (draw & 0xFFFFFFFF).to_bytes(4, "big"))
    out = bytearray(data)
    if not _patch_declared_length(out, len(avp)):
        return data
    return bytes(out) + avp


def _mut_zero_length_avp(data: bytes, draw: int) -> bytes:
    avp = (draw & 0xFFFFFFFF).to_bytes(4, "big") + b"\x00" + (0).to_bytes(3, "big")
    out = bytearray(data)
    if not _patch_declared_length(out, len(avp)):
        return data
    return bytes(out) + avp


def _mut_shuffle_avps(data: bytes, draw: int) -> bytes:
    msg = decode_message(data)
    if isinstance(msg, ParseError) or len(msg.avps) < 2:
        return data
    order = list(msg.avps)
    random.Random(draw).shuffle(order)
    return encode_message(Message(header=msg.header, avps=tuple(order)))


def encode_avp_raw(code: int, flags: int, payload: bytes) -> bytes:
    """Hand-rolled AVP bytes, no object-level checks: fuzzing building block."""
    length = 8 + len(payload)
    raw = code.to_bytes(4, "big") + bytes([flags]) + length.to_bytes(3, "big") + payload
    return raw + b"\x00" * (-length % 4)


_MUTATORS: dict[MutationOp, Callable[[bytes, int], bytes]] = {
    MutationOp.FLIP_FLAG: _mut_flip_flag,
    MutationOp.SET_MANDATORY_UNKNOWN_AVP: _mut_set_mandatory_unknown_avp,
    MutationOp.TRUNCATE: _mut_truncate,
    MutationOp.INFLATE_LENGTH: _mut_inflate_length,
    MutationOp.CORRUPT_VERSION: _mut_corrupt_version,
    MutationOp.SHUFFLE_AVPS: _mut_shuffle_avps,
    MutationOp.ZERO_LENGTH_AVP: _mut_zero_length_avp,
}


def mutate(data: bytes, op: MutationOp, draw: int) -> bytes:
    """Apply one mutation operator. Deterministic in (data, op, draw).

    Returns the input unchanged when the operator is a no-op on this
    structure; callers detect that by comparison.
    """
    return _MUTATORS[op](data, draw)


# --- flooding -----------------------------------------------------------------


@dataclass
class FloodResult:
    target: str
    rate_tps: float
    duration_s: float
    offered: int
    sent: int
    answered: int
    dropped: int
    in_flight: int
    element_failed: bool
    answer_ratio: float
    latency_min_us: Optional[int]
    latency_mean_us: Optional[int]
    latency_max_us: Optional[int]
    result_code_counts: dict[str, int]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class _FloodDriver:
    _REAP_EVERY = 1024  # sends between sweeps of expired pending entries

    def __init__(
        self,
        ab: AttackBoxElement,
        target: Element,
        count: int,
        interval_us: int,
        timeout_us: int,
    ):
        self.ab = ab
        self.target = target
        self.count = count
        self.interval_us = interval_us
        self.timeout_us = timeout_us
        self.offered = 0
        self.sent = 0
        self.answered = 0
        self.expired = 0
        self.latencies: list[int] = []
        self.result_codes: dict[str, int] = {}
        self.outstanding: dict[int, int] = {}  # hop-by-hop -> sent_at

    def on_timer(self, sim, tag, now):
        if tag[0] != "flood-send":
            return
        i = tag[1]
        self.offered += 1
        payload = Avp(code=dct.AVP_ECHO_PAYLOAD, data=i.to_bytes(4, "big"))
        hbh = self.ab.send_app_request(
            sim, self.target.node, dct.CMD_ECHO, [payload], ("flood", i), now
        )
        if hbh is not None:
            self.sent += 1
            self.outstanding[hbh] = now
        if i % self._REAP_EVERY == 0:
            self.reap(now)
        if i + 1 < self.count:
            sim.schedule_timer(now + self.interval_us, self.ab.node, ("flood-send", i + 1))

    def reap(self, now) -> None:
        """Give up on requests past the answer timeout; keeps the pending map small."""
        dead = [hbh for hbh, sent_at in self.outstanding.items() if now - sent_at > self.timeout_us]
        if not dead:
            return
        self.expired += self.ab.forget_pending_many(self.target.node, dead)
        for hbh in dead:
            del self.outstanding[hbh]

    def on_answer(self, sim, pending, msg, now):
        ctx = pending.context
        if not (isinstance(ctx, tuple) and ctx and ctx[0] == "flood"):
            return
        self.answered += 1
        self.outstanding.pop(pending.hop_by_hop_id, None)
        self.latencies.append(now - pending.sent_at)
        code = result_code_of(msg)
        key = str(code) if code is not None else "none"
        self.result_codes[key] = self.result_codes.get(key, 0) + 1


def run_flood(lab: Lab, spec: FloodSpec) -> tuple[FloodResult, list[Finding]]:
    """Well-formed echo requests at a constant rate against one element.

    The run settles for a grace period after the last send so queued
    requests drain; whatever is still unanswered then is counted as
    dropped and its pending entries are reclaimed.
    """
    sim = lab.sim
    ab = lab.attack_box()
    target = lab.element(spec.target)
    interval_us = max(1, round(US_PER_S / spec.rate_tps))
    count = int(round(spec.rate_tps * spec.duration_s))
    driver = _FloodDriver(ab, target, count, interval_us, lab.request_timeout_us)
    ab.driver = driver
    sim.schedule_timer(sim.clock, ab.node, ("flood-send", 0))
    drain_us = int(
        target.capacity.queue_capacity / target.capacity.service_rate * US_PER_S
    )
    horizon = (
        sim.clock
        + int(round(spec.duration_s * US_PER_S))
        + drain_us
        + int(round(spec.settle_grace_s * US_PER_S))
        + 2 * lab.max_latency_us()
    )
    sim.run_until(horizon)
    ab.driver = None

    # Reconcile: anything still pending can no longer be answered.
    ab.forget_pending_many(target.node, list(driver.outstanding))
    driver.outstanding.clear()
    dropped = driver.offered - driver.answered
    lat = driver.latencies
    ratio = driver.answered / driver.offered if driver.offered else 1.0
    result = FloodResult(
        target=spec.target,
        rate_tps=spec.rate_tps,
        duration_s=spec.duration_s,
        offered=driver.offered,
        sent=driver.sent,
        answered=driver.answered,
        dropped=dropped,
        in_flight=0,
        element_failed=target.failed,
        answer_ratio=ratio,
        latency_min_us=min(lat) if lat else None,
        latency_mean_us=round(sum(lat) / len(lat)) if lat else None,
        latency_max_us=max(lat) if lat else None,
        result_code_counts=dict(sorted(driver.result_codes.items())),
    )
    findings: list[Finding] = []
    if target.failed or ratio < spec.degraded_answer_ratio:
        severity = Severity.OUTAGE if target.failed else Severity.DEGRADED
        findings.append(
            Finding(
                attack_kind="flood",
                severity=severity,
                evidence={
                    "target": spec.target,
                    "rate_tps": spec.rate_tps,
                    "duration_s": spec.duration_s,
                    "service_rate_tps": target.capacity.service_rate,
                    "offered": result.offered,
                    "answered": result.answered,
                    "dropped": result.dropped,
                    "answer_ratio": result.answer_ratio,
                    "element_failed": target.failed,
                },
            )
        )
    return result, findings


# --- interception ----------------------------------------------------------------


@dataclass
class InterceptResult:
    link: tuple[str, str]
    avp_codes: tuple[int, ...]
    records_captured: int
    records_decoded: int
    inventory: list[dict]  # {"avp_code", "value_hex", "value_text"}

    def to_dict(self) -> dict:
        return {
            "link": list(self.link),
            "avp_codes": list(self.avp_codes),
            "records_captured": self.records_captured,
            "records_decoded": self.records_decoded,
            "inventory": self.inventory,
        }


def run_intercept(
    lab: Lab, spec: InterceptSpec, traffic: Optional[Callable[[], None]] = None
) -> tuple[InterceptResult, list[Finding], list[CaptureRecord]]:
    """Tap one link, let scenario traffic run, inventory interesting AVPs.

    On a protected link the tap stays silent, the inventory stays empty,
    and no finding is emitted. The captured records are returned so the
    campaign can persist them as a capture file.
    """
    sim = lab.sim
    a, b = lab.node(spec.link[0]), lab.node(spec.link[1])
    tap = sim.attach_tap(a, b)
    (traffic if traffic is not None else lab.scenario_traffic)()
    records = list(tap.records)
    wanted = set(spec.avp_codes)
    seen: dict[tuple[int, bytes], None] = {}
    decoded = 0
    for rec in records:
        msg = decode_message(rec.data)
        if isinstance(msg, ParseError):
            continue
        decoded += 1
        for avp in msg.avps:
            if avp.code in wanted:
                seen.setdefault((avp.code, avp.data), None)
    inventory = [
        {
            "avp_code": code,
            "value_hex": value.hex(),
            "value_text": _as_text(value),
        }
        for (code, value) in seen
    ]
    result = InterceptResult(
        link=spec.link,
        avp_codes=spec.avp_codes,
        records_captured=len(records),
        records_decoded=decoded,
        inventory=inventory,
    )
    findings: list[Finding] = []
    if inventory:
        findings.append(
            Finding(
                attack_kind="intercept",
                severity=Severity.EXPOSURE,
                evidence={
                    "link": f"{spec.link[0]}<->{spec.link[1]}",
                    "records_captured": len(records),
                    "extracted": inventory,
                },
            )
        )
    return result, findings, records


def _as_text(value: bytes) -> Optional[str]:
    try:
        text = value.decode("utf-8")
    except UnicodeDecodeError:
        return None
    return text if text.isprintable() else None


# --- fuzzing --------------------------------------------------------------------

DISPOSITION_ANSWERED_ERROR = "answered-error"
DISPOSITION_ANSWERED_SUCCESS = "answered-success"
DISPOSITION_DROPPED = "dropped"
DISPOSITION_NO_RESPONSE = "no-response-timeout"
DISPOSITION_CRASH = "crash"

DISPOSITIONS = (
    DISPOSITION_ANSWERED_ERROR,
    DISPOSITION_ANSWERED_SUCCESS,
    DISPOSITION_DROPPED,
    DISPOSITION_NO_RESPONSE,
    DISPOSITION_CRASH,
)


@dataclass
class FuzzResult:
    target: str
    seed: int
    case_count: int
    ops: list[str]
    no_op_cases: int
    crash_cases: int
    accepted_invalid_cases: int
    tallies: dict[str, dict[str, int]]  # op -> disposition -> count
    result_codes: dict[str, dict[str, int]]  # op -> result code -> count

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def seed_corpus(identity: str = "attacker.lab") -> list[tuple[str, Message]]:
    """Valid messages of the testbed's own protocol surface."""

    def txt(code: int, value: str, mandatory: bool = True) -> Avp:
        return Avp(code=code, data=value.encode(), mandatory=mandatory)

    return [
        (
            "echo",
            build_message(
                dct.CMD_ECHO,
                request=True,
                avps=[Avp(code=dct.AVP_ECHO_PAYLOAD, data=b"seed-corpus")],
            ),
        ),
        ("echo-empty", build_message(dct.CMD_ECHO, request=True)),
        (
            "profile-query",
            build_message(
                dct.CMD_PROFILE_QUERY,
                request=True,
                avps=[txt(dct.AVP_SUBSCRIBER_ID, "imsi-001001000000001")],
            ),
        ),
        (
            "location-update",
            build_message(
                dct.CMD_LOCATION_UPDATE,
                request=True,
                avps=[
                    txt(dct.AVP_SUBSCRIBER_ID, "imsi-001001000000001"),
                    txt(dct.AVP_LOCATION, "tracking-area-1"),
                ],
            ),
        ),
        (
            "policy-install",
            build_message(
                dct.CMD_POLICY_INSTALL,
                request=True,
                avps=[
                    txt(dct.AVP_RULE_ID, "seed-rule"),
                    txt(dct.AVP_SUBSCRIBER_ID, "imsi-001001000000001"),
                    Avp(code=dct.AVP_QOS_CLASS, data=(9).to_bytes(4, "big"), mandatory=True),
                ],
            ),
        ),
        ("cer", build_cer(identity, [0])),
        ("dwr", build_dwr(identity)),
    ]


class _FuzzDriver:
    def __init__(self):
        self.wire_answers: dict[int, Optional[int]] = {}  # hop-by-hop -> result code

    def on_wire_answer(self, msg, now):
        self.wire_answers.setdefault(msg.header.hop_by_hop_id, result_code_of(msg))

    def on_answer(self, sim, pending, msg, now):
        pass  # dispositions are judged at the wire, before FSM routing

    def on_timer(self, sim, tag, now):
        pass


def run_fuzz(lab: Lab, spec: FuzzSpec) -> tuple[FuzzResult, list[Finding]]:
    """Mutation fuzz campaign against one target element, one case at a time.

    Dispositions are judged from the attacker's answers plus the
    target's own drop counters (the testbed is omniscient about its
    elements). A crash escaping the target handler is caught here,
    recorded, and the element is marked failed.
    """
    if spec.seed is None:
        raise ValueError("fuzz runs need an explicit seed")
    sim = lab.sim
    ab = lab.attack_box()
    target = lab.element(spec.target)
    rng = random.Random(spec.seed)
    corpus = seed_corpus(identity=ab.peer_config.identity)
    driver = _FuzzDriver()
    ab.driver = driver

    ops = [op.value for op in spec.ops]
    tallies: dict[str, dict[str, int]] = {op: {} for op in ops}
    result_codes: dict[str, dict[str, int]] = {op: {} for op in ops}
    no_op_cases = 0
    crash_cases = 0
    accepted_invalid = 0
    findings: list[Finding] = []

    for i in range(spec.case_count):
        _, template = corpus[rng.randrange(len(corpus))]
        op = spec.ops[rng.randrange(len(spec.ops))]
        draw = rng.getrandbits(32)
        hbh = ab.alloc_hop_by_hop(target.node)
        base = encode_message(replace_ids(template, hbh, hbh))
        case = mutate(base, op, draw)
        if case == base:
            no_op_cases += 1
        structurally_valid = not isinstance(decode_message(case), ParseError)
        drops_before = (target.parse_drops, target.fsm_drops, target.dropped_failed_inbound)

        disposition = None
        sent = ab.send_raw_request(
            sim, target.node, case, hbh, template.header.command_code, ("fuzz", i), sim.clock
        )
        if sent:
            deadline = sim.clock + lab.request_timeout_us
            while hbh not in driver.wire_answers:
                nxt = sim.next_event_at()
                if nxt is None or nxt > deadline:
                    break
                try:
                    sim.run_until(nxt)
                except Exception as exc:  # a crashing target is a finding, not a test abort
                    disposition = DISPOSITION_CRASH
                    crash_cases += 1
                    target.failed = True
                    target.failed_at = sim.clock
                    findings.append(
                        Finding(
                            attack_kind="fuzz",
                            severity=Severity.OUTAGE,
                            evidence={
                                "finding_type": "crash",
                                "case_index": i,
                                "mutation_op": op.value,
                                "exception": f"{type(exc).__name__}: {exc}",
                                "case_hex": case.hex(),
                            },
                        )
                    )
                    break
            if disposition is None:
                if hbh in driver.wire_answers:
                    code = driver.wire_answers[hbh]
                    if code == dct.RESULT_SUCCESS:
                        disposition = DISPOSITION_ANSWERED_SUCCESS
                    else:
                        disposition = DISPOSITION_ANSWERED_ERROR
                    key = str(code) if code is not None else "none"
                    per_op = result_codes[op.value]
                    per_op[key] = per_op.get(key, 0) + 1
                else:
                    sim.run_until(deadline)
                    drops_after = (
                        target.parse_drops,
                        target.fsm_drops,
                        target.dropped_failed_inbound,
                    )
                    if drops_after != drops_before:
                        disposition = DISPOSITION_DROPPED
                    else:
                        disposition = DISPOSITION_NO_RESPONSE
        else:
            disposition = DISPOSITION_NO_RESPONSE
        ab.forget_pending(target.node, hbh)

        per_op = tallies[op.value]
        per_op[disposition] = per_op.get(disposition, 0) + 1
        if disposition == DISPOSITION_ANSWERED_SUCCESS and not structurally_valid:
            accepted_invalid += 1
            findings.append(
                Finding(
                    attack_kind="fuzz",
                    severity=Severity.INFO,
                    evidence={
                        "finding_type": "accepted-invalid",
                        "case_index": i,
                        "mutation_op": op.value,
                        "case_hex": case.hex(),
                    },
                )
            )

    ab.driver = None
    result = FuzzResult(
        target=spec.target,
        seed=spec.seed,
        case_count=spec.case_count,
        ops=ops,
        no_op_cases=no_op_cases,
        crash_cases=crash_cases,
        accepted_invalid_cases=accepted_invalid,
        tallies={op: dict(sorted(t.items())) for op, t in tallies.items()},
        result_codes={op: dict(sorted(t.items())) for op, t in result_codes.items()},
    )
    return result, findings
