"""Campaign and topology configuration.

One line-oriented format covers both: `[section arg ...]` headers with
`key = value` lines underneath. Full-line comments start with `#`.
Section types: campaign, node, link, subscriber, rule, attack. Errors
always name the source and line number.

phase1 and phase2 ship as built-in configs (complete text, parsed by the
same loader as user files) so `run --config phase1` needs nothing on
disk. The seed is mandatory and has no wall-clock default: a campaign
is a pure function of its config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import dictionary as dct
from .attacks import ALL_MUTATION_OPS, AttackSpec, FloodSpec, FuzzSpec, InterceptSpec, MutationOp
from .elements import ElementCapacity, ElementKind, PolicyRule, SubscriberRecord
from .simnet import LinkSpec, NodeSpec, TopologySpec

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


@dataclass
class Section:
    kind: str
    args: tuple[str, ...]
    values: dict[str, str]
    line: int
    value_lines: dict[str, int] = field(default_factory=dict)

    def where(self, key: Optional[str] = None) -> int:
        return self.value_lines.get(key, self.line) if key else self.line


def parse_sections(text: str, source: str = "<config>") -> list[Section]:
    sections: list[Section] = []
    current: Optional[Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            parts = line[1:-1].split()
            if not parts:
                raise ConfigError(f"{source}:{lineno}: empty section header")
            current = Section(kind=parts[0], args=tuple(parts[1:]), values={}, line=lineno)
            sections.append(current)
            continue
        if "=" in line:
            if current is None:
                raise ConfigError(f"{source}:{lineno}: key outside any section")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key:
                raise ConfigError(f"{source}:{lineno}: empty key")
            if key in current.values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            current.values[key] = value
            current.value_lines[key] = lineno
            continue
        raise ConfigError(f"{source}:{lineno}: expected section header or key = value")
    return sections


def _get_int(sec: Section, key: str, source: str, default: Optional[int] = None) -> Optional[int]:
    if key not in sec.values:
        return default
    try:
        return int(sec.values[key])
    except ValueError:
        raise ConfigError(f"{source}:{sec.where(key)}: {key} must be an integer") from None


def _get_float(sec: Section, key: str, source: str, default: Optional[float] = None) -> Optional[float]:
    if key not in sec.values:
        return default
    try:
        return float(sec.values[key])
    except ValueError:
        raise ConfigError(f"{source}:{sec.where(key)}: {key} must be a number") from None


def _get_bool(sec: Section, key: str, source: str, default: bool = False) -> bool:
    if key not in sec.values:
        return default
    value = sec.values[key].lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ConfigError(f"{source}:{sec.where(key)}: {key} must be true/false")


def _require(sec: Section, key: str, source: str) -> str:
    if key not in sec.values:
        raise ConfigError(
            f"{source}:{sec.line}: [{sec.kind}] section is missing required field {key!r}"
        )
    return sec.values[key]


@dataclass(frozen=True)
class CampaignConfig:
    source: str
    phase: str
    seed: int
    output_path: str
    topology: TopologySpec
    kinds: dict[str, ElementKind]
    capacities: dict[str, ElementCapacity]
    subscribers: tuple[SubscriberRecord, ...]
    rules: tuple[PolicyRule, ...]
    attacks: tuple[AttackSpec, ...]
    watchdog_interval_s: float = 30.0
    request_timeout_s: float = 2.0

    def echo_dict(self) -> dict:
        """Configuration echo embedded in reports (resolved, deterministic)."""
        return {
            "source": self.source,
            "phase": self.phase,
            "seed": self.seed,
            "output": self.output_path,
            "watchdog_interval_s": self.watchdog_interval_s,
            "request_timeout_s": self.request_timeout_s,
            "nodes": [
                {
                    "label": n.label,
                    "kind": self.kinds[n.label].value,
                    "service_rate": self.capacities[n.label].service_rate,
                    "queue_capacity": self.capacities[n.label].queue_capacity,
                    "failure_threshold_s": self.capacities[n.label].failure_threshold_s,
                }
                for n in self.topology.nodes
            ],
            "links": [
                {
                    "a": l.a,
                    "b": l.b,
                    "latency_ms": l.latency_ms,
                    "loss_probability": l.loss_probability,
                    "protected": l.protected,
                }
                for l in self.topology.links
            ],
            "subscribers": [
                {"id": s.subscriber_id, "location": s.location, "profile": dict(s.profile)}
                for s in self.subscribers
            ],
            "attacks": [_attack_echo(a) for a in self.attacks],
        }


def _attack_echo(spec: AttackSpec) -> dict:
    if isinstance(spec, FloodSpec):
        return {
            "kind": "flood",
            "target": spec.target,
            "rate_tps": spec.rate_tps,
            "duration_s": spec.duration_s,
            "degraded_answer_ratio": spec.degraded_answer_ratio,
        }
    if isinstance(spec, InterceptSpec):
        return {"kind": "intercept", "link": list(spec.link), "avp_codes": list(spec.avp_codes)}
    return {
        "kind": "fuzz",
        "target": spec.target,
        "cases": spec.case_count,
        "ops": [op.value for op in spec.ops],
        "seed": spec.seed,
    }


_KIND_NAMES = {k.value: k for k in ElementKind}
_CORE_KINDS = {ElementKind.HSS, ElementKind.MME, ElementKind.PCRF}


def _parse_attack(sec: Section, source: str, labels: dict[str, ElementKind]) -> AttackSpec:
    if len(sec.args) != 1:
        raise ConfigError(f"{source}:{sec.line}: [attack] needs exactly one kind argument")
    kind = sec.args[0]
    if kind == "flood":
        target = _require(sec, "target", source)
        if target not in labels:
            raise ConfigError(f"{source}:{sec.where('target')}: unknown flood target {target!r}")
        rate = _get_float(sec, "rate_tps", source, None)
        duration = _get_float(sec, "duration_s", source, None)
        if rate is None:
            _missing(sec, "rate_tps", source)
        if duration is None:
            _missing(sec, "duration_s", source)
        try:
            return FloodSpec(
                target=target,
                rate_tps=rate,
                duration_s=duration,
                degraded_answer_ratio=_get_float(sec, "degraded_threshold", source, 0.95),
            )
        except ValueError as exc:
            raise ConfigError(f"{source}:{sec.line}: {exc}") from None
    if kind == "intercept":
        link_value = _require(sec, "link", source).split()
        if len(link_value) != 2:
            raise ConfigError(f"{source}:{sec.where('link')}: link must name two nodes")
        for label in link_value:
            if label not in labels:
                raise ConfigError(f"{source}:{sec.where('link')}: unknown node {label!r}")
        codes = []
        builtin = dct.builtin_dictionary()
        for item in _require(sec, "avp_codes", source).split(","):
            item = item.strip()
            if item.isdigit():
                codes.append(int(item))
                continue
            code = builtin.code_for_name(item)
            if code is None:
                raise ConfigError(
                    f"{source}:{sec.where('avp_codes')}: unknown AVP name {item!r}"
                )
            codes.append(code)
        return InterceptSpec(link=(link_value[0], link_value[1]), avp_codes=tuple(codes))
    if kind == "fuzz":
        target = _require(sec, "target", source)
        if target not in labels:
            raise ConfigError(f"{source}:{sec.where('target')}: unknown fuzz target {target!r}")
        ops: tuple[MutationOp, ...] = ALL_MUTATION_OPS
        if "ops" in sec.values:
            names = [o.strip() for o in sec.values["ops"].split(",") if o.strip()]
            try:
                ops = tuple(MutationOp(name) for name in names)
            except ValueError as exc:
                raise ConfigError(f"{source}:{sec.where('ops')}: {exc}") from None
        cases = _get_int(sec, "cases", source, None)
        if cases is None:
            _missing(sec, "cases", source)
        try:
            return FuzzSpec(
                target=target, case_count=cases, ops=ops, seed=_get_int(sec, "seed", source, None)
            )
        except ValueError as exc:
            raise ConfigError(f"{source}:{sec.line}: {exc}") from None
    raise ConfigError(f"{source}:{sec.line}: unknown attack kind {kind!r}")


def _missing(sec: Section, key: str, source: str):
    raise ConfigError(
        f"{source}:{sec.line}: [{sec.kind}] section is missing required field {key!r}"
    )


def parse_campaign_config(
    text: str,
    source: str = "<config>",
    *,
    seed_override: Optional[int] = None,
) -> CampaignConfig:
    sections = parse_sections(text, source)
    campaign_secs = [s for s in sections if s.kind == "campaign"]
    if len(campaign_secs) != 1:
        raise ConfigError(f"{source}: expected exactly one [campaign] section")
    camp = campaign_secs[0]
    phase = _require(camp, "phase", source)
    if phase not in ("phase1", "phase2", "custom"):
        raise ConfigError(f"{source}:{camp.where('phase')}: phase must be phase1/phase2/custom")
    if seed_override is not None:
        seed = seed_override
    else:
        seed = _get_int(camp, "seed", source, None)
        if seed is None:
            raise ConfigError(
                f"{source}:{camp.line}: [campaign] section is missing required field 'seed'"
                " (campaigns are reproducible; there is no wall-clock default)"
            )
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"{source}:{camp.where('seed')}: seed must fit in 64 bits")
    output_path = camp.values.get("output", "campaign-out")

    # `topology = <builtin>` splices the named built-in's topology sections.
    if "topology" in camp.values:
        name = camp.values["topology"]
        if name not in BUILTIN_CONFIGS:
            raise ConfigError(f"{source}:{camp.where('topology')}: unknown built-in {name!r}")
        if any(s.kind in ("node", "link", "subscriber", "rule") for s in sections):
            raise ConfigError(
                f"{source}:{camp.where('topology')}: config declares both topology="
                f"{name} and its own topology sections"
            )
        spliced = parse_sections(BUILTIN_CONFIGS[name], source=f"<builtin:{name}>")
        sections = sections + [
            s for s in spliced if s.kind in ("node", "link", "subscriber", "rule")
        ]

    kinds: dict[str, ElementKind] = {}
    capacities: dict[str, ElementCapacity] = {}
    nodes: list[NodeSpec] = []
    links: list[LinkSpec] = []
    subscribers: list[SubscriberRecord] = []
    rules: list[PolicyRule] = []

    for sec in sections:
        if sec.kind == "campaign":
            continue
        if sec.kind == "node":
            if len(sec.args) != 1:
                raise ConfigError(f"{source}:{sec.line}: [node] needs exactly one label")
            label = sec.args[0]
            if label in kinds:
                raise ConfigError(f"{source}:{sec.line}: duplicate node label {label!r}")
            kind_name = _require(sec, "kind", source)
            if kind_name not in _KIND_NAMES:
                raise ConfigError(
                    f"{source}:{sec.where('kind')}: unknown element kind {kind_name!r}"
                )
            kinds[label] = _KIND_NAMES[kind_name]
            try:
                capacities[label] = ElementCapacity(
                    service_rate=_get_float(sec, "service_rate", source, 1000.0),
                    queue_capacity=_get_int(sec, "queue_capacity", source, 100),
                    failure_threshold_s=_get_float(sec, "failure_threshold_s", source, 3600.0),
                )
            except ValueError as exc:
                raise ConfigError(f"{source}:{sec.line}: {exc}") from None
            nodes.append(NodeSpec(label=label))
        elif sec.kind == "link":
            if len(sec.args) != 2:
                raise ConfigError(f"{source}:{sec.line}: [link] needs two node labels")
            a, b = sec.args
            for label in (a, b):
                if label not in kinds:
                    raise ConfigError(
                        f"{source}:{sec.line}: link endpoint {label!r} is not a declared node"
                    )
            links.append(
                LinkSpec(
                    a=a,
                    b=b,
                    latency_ms=_get_float(sec, "latency_ms", source, 10.0),
                    loss_probability=_get_float(sec, "loss", source, 0.0),
                    protected=_get_bool(sec, "protected", source, False),
                )
            )
        elif sec.kind == "subscriber":
            if len(sec.args) != 1:
                raise ConfigError(f"{source}:{sec.line}: [subscriber] needs one id argument")
            sid = sec.args[0]
            if any(s.subscriber_id == sid for s in subscribers):
                raise ConfigError(f"{source}:{sec.line}: duplicate subscriber {sid!r}")
            profile = {
                key[len("profile.") :]: value
                for key, value in sec.values.items()
                if key.startswith("profile.")
            }
            subscribers.append(
                SubscriberRecord(
                    subscriber_id=sid,
                    location=_require(sec, "location", source),
                    profile=profile,
                )
            )
        elif sec.kind == "rule":
            if len(sec.args) != 1:
                raise ConfigError(f"{source}:{sec.line}: [rule] needs one id argument")
            rules.append(
                PolicyRule(
                    rule_id=sec.args[0],
                    subscriber_id=_require(sec, "subscriber", source),
                    qos_class=_get_int(sec, "qos_class", source, 9),
                )
            )
        elif sec.kind == "attack":
            pass  # handled below, in order, after labels are known
        else:
            raise ConfigError(f"{source}:{sec.line}: unknown section kind {sec.kind!r}")

    attacks = tuple(
        _parse_attack(sec, source, kinds) for sec in sections if sec.kind == "attack"
    )

    config = CampaignConfig(
        source=source,
        phase=phase,
        seed=seed,
        output_path=output_path,
        topology=TopologySpec(nodes=tuple(nodes), links=tuple(links)),
        kinds=kinds,
        capacities=capacities,
        subscribers=tuple(subscribers),
        rules=tuple(rules),
        attacks=attacks,
        watchdog_interval_s=_get_float(camp, "watchdog_interval_s", source, 30.0),
        request_timeout_s=_get_float(camp, "request_timeout_s", source, 2.0),
    )
    _validate_phase(config, source)
    return config


def _validate_phase(config: CampaignConfig, source: str) -> None:
    if not config.topology.nodes:
        raise ConfigError(f"{source}: config declares no nodes")
    present = set(config.kinds.values())
    if config.phase == "phase1":
        illegal = present & _CORE_KINDS
        if illegal:
            names = ", ".join(sorted(k.value for k in illegal))
            raise ConfigError(f"{source}: phase1 config may not declare core elements ({names})")
        for spec in config.attacks:
            if isinstance(spec, (FloodSpec, FuzzSpec)):
                if config.kinds[spec.target] is not ElementKind.TARGET_SERVER:
                    raise ConfigError(
                        f"{source}: phase1 permits only TargetServer-directed attacks"
                        f" (got {spec.target!r})"
                    )
            else:
                if all(
                    config.kinds[label] is not ElementKind.TARGET_SERVER for label in spec.link
                ):
                    raise ConfigError(
                        f"{source}: phase1 intercepts must tap a TargetServer link"
                    )
    if config.phase == "phase2":
        missing = _CORE_KINDS - present
        if missing:
            names = ", ".join(sorted(k.value for k in missing))
            raise ConfigError(f"{source}: phase2 config must declare {names}")


PHASE1_CONFIG = """\
# Built-in phase1 lab: one attack box, one standalone target server.
[campaign]
phase = phase1
seed = 1
output = phase1-out

[node attacker]
kind = AttackBox

[node target]
kind = TargetServer
service_rate = 1000
queue_capacity = 100

[link attacker target]
latency_ms = 5

[attack fuzz]
target = target
cases = 1000

[attack flood]
target = target
rate_tps = 800
duration_s = 5
"""

PHASE2_CONFIG = """\
# Built-in phase2 lab: attack box, target server, and the simulated core
# (HSS, MME, PCRF) carrying attach traffic for three subscribers.
[campaign]
phase = phase2
seed = 2
output = phase2-out

[node attacker]
kind = AttackBox

[node target]
kind = TargetServer
service_rate = 1000
queue_capacity = 100
failure_threshold_s = 5

[node hss]
kind = HSS
service_rate = 500
queue_capacity = 50

[node mme]
kind = MME

[node pcrf]
kind = PCRF
service_rate = 500
queue_capacity = 50

[link attacker target]
latency_ms = 5

[link mme hss]
latency_ms = 10

[link mme pcrf]
latency_ms = 10

[subscriber imsi-001001000000001]
location = tracking-area-7
profile.tier = gold

[subscriber imsi-001001000000002]
location = tracking-area-12
profile.tier = silver

[subscriber imsi-001001000000003]
location = tracking-area-9
profile.tier = bronze

[attack intercept]
link = mme hss
avp_codes = location

[attack flood]
target = target
rate_tps = 2000
duration_s = 10
"""

BUILTIN_CONFIGS: dict[str, str] = {
    "phase1": PHASE1_CONFIG,
    "phase2": PHASE2_CONFIG,
}


def load_config(
    path_or_name: Union[str, Path],
    *,
    seed_override: Optional[int] = None,
) -> CampaignConfig:
    """Load a campaign config from a built-in name or a file path.

    The seed is part of the experiment, so overriding it changes the
    resulting report; where the report gets written is not, which is why
    there is no output override here (pass out_dir to run_campaign).
    """
    name = str(path_or_name)
    if name in BUILTIN_CONFIGS:
        return parse_campaign_config(
            BUILTIN_CONFIGS[name], source=name, seed_override=seed_override
        )
    path = Path(path_or_name)
    if not path.exists():
        raise ConfigError(f"no such config file or built-in: {name}")
    return parse_campaign_config(
        path.read_text(), source=str(path), seed_override=seed_override
    )
