"""Campaign execution: build the lab, open the links, run the attacks,
classify the findings, write the report.

A campaign is a pure function of its config (which includes the seed):
rerunning the same config produces byte-identical report and capture
files, tool version aside. Reports exist in two renderings, structured
JSON and grouped plain text, with the JSON round-trippable back into a
Report value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .attacks import (
    Finding,
    FloodSpec,
    FuzzSpec,
    InterceptSpec,
    run_flood,
    run_fuzz,
    run_intercept,
)
from .capture import write_capture
from .config import CampaignConfig
from .elements import Lab, LabError
from .simnet import CaptureRecord
from .taxonomy import Impact, Origin, TaxonomyLabel, Technique

TOOL_VERSION = "diamlab 0.1.0"


class CampaignError(RuntimeError):
    pass


def classify(finding: Finding) -> TaxonomyLabel:
    """Deterministic rule table from attack kind (and fuzz disposition) to cell.

    All implemented attacks originate from the attack box reached over
    the interconnect, so the origin axis is always external_interconnect;
    the internal and compromised_element origins (and the spoofing
    technique) are scheme completeness, produced by no current module.
    """
    kind = finding.attack_kind
    if kind == "flood":
        return TaxonomyLabel(Origin.EXTERNAL_INTERCONNECT, Technique.FLOODING, Impact.AVAILABILITY)
    if kind == "intercept":
        return TaxonomyLabel(
            Origin.EXTERNAL_INTERCONNECT, Technique.INTERCEPTION, Impact.CONFIDENTIALITY
        )
    if kind == "fuzz":
        impact = (
            Impact.AVAILABILITY
            if finding.evidence.get("finding_type") == "crash"
            else Impact.INTEGRITY
        )
        return TaxonomyLabel(Origin.EXTERNAL_INTERCONNECT, Technique.MALFORMED_MESSAGE, impact)
    raise CampaignError(f"no taxonomy rule for attack kind {kind!r}")


@dataclass
class Report:
    tool_version: str
    phase: str
    seed: int
    config: dict
    attacks: list[dict]
    findings: list[dict]
    stats: dict

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "phase": self.phase,
            "seed": self.seed,
            "config": self.config,
            "attacks": self.attacks,
            "findings": self.findings,
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(
            tool_version=d["tool_version"],
            phase=d["phase"],
            seed=d["seed"],
            config=d["config"],
            attacks=d["attacks"],
            findings=d["findings"],
            stats=d["stats"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def render_report(report: Report, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "text":
        return _render_text(report)
    raise ValueError(f"unknown report format {fmt!r} (expected 'text' or 'json')")


def _render_text(report: Report) -> str:
    lines: list[str] = []
    add = lines.append
    add("=" * 64)
    add("Diameter testbed campaign report")
    add("=" * 64)
    add(f"tool:    {report.tool_version}")
    add(f"phase:   {report.phase}")
    add(f"seed:    {report.seed}")
    add(f"config:  {report.config.get('source', '?')}")
    add("")
    add("-- topology --")
    for node in report.config.get("nodes", []):
        add(
            f"  node {node['label']:<10} {node['kind']:<13}"
            f" rate={node['service_rate']:g}tps queue={node['queue_capacity']}"
            f" fail_after={node['failure_threshold_s']:g}s"
        )
    for link in report.config.get("links", []):
        guard = "protected" if link["protected"] else "unprotected"
        add(
            f"  link {link['a']} <-> {link['b']}"
            f" latency={link['latency_ms']:g}ms loss={link['loss_probability']:g} {guard}"
        )
    add("")
    add("-- attacks --")
    if not report.attacks:
        add("  (none)")
    for i, attack in enumerate(report.attacks):
        add(f"  [{i}] {attack['kind']}")
        for key, value in sorted(attack["result"].items()):
            if isinstance(value, (dict, list)):
                add(f"        {key} = {json.dumps(value, sort_keys=True)}")
            else:
                add(f"        {key} = {value}")
    add("")
    add("-- findings --")
    if not report.findings:
        add("  no findings: every attack stayed below its reporting thresholds")
    else:
        by_cell: dict[str, list[dict]] = {}
        for finding in report.findings:
            tax = finding.get("taxonomy") or {}
            cell = "/".join(
                (tax.get("origin", "?"), tax.get("technique", "?"), tax.get("impact", "?"))
            )
            by_cell.setdefault(cell, []).append(finding)
        for cell in sorted(by_cell):
            add(f"  [{cell}]")
            for finding in by_cell[cell]:
                add(
                    f"    #{finding['id']} {finding['attack_kind']}"
                    f" severity={finding['severity']}"
                )
                for key, value in sorted(finding["evidence"].items()):
                    if isinstance(value, (dict, list)):
                        value = json.dumps(value, sort_keys=True)
                    add(f"        {key}: {value}")
    add("")
    add("-- simulation --")
    for key, value in sorted(report.stats.items()):
        add(f"  {key} = {value}")
    add("")
    return "\n".join(lines)


@dataclass
class CampaignRun:
    config: CampaignConfig
    lab: Lab
    report: Report
    findings: list[Finding]
    results: list[object]
    out_dir: Optional[Path] = None


def build_lab(config: CampaignConfig) -> Lab:
    return Lab.build(
        topology=config.topology,
        kinds=config.kinds,
        capacities=config.capacities,
        subscribers=list(config.subscribers),
        rules=list(config.rules),
        seed=config.seed,
        watchdog_interval_s=config.watchdog_interval_s,
        request_timeout_s=config.request_timeout_s,
    )


def _derived_fuzz_seed(campaign_seed: int, attack_index: int) -> int:
    return (campaign_seed * 1_000_003 + attack_index + 1) % 2**64


def run_campaign(
    config: CampaignConfig,
    *,
    out_dir: Optional[str] = None,
    write_files: bool = True,
) -> CampaignRun:
    """Execute every attack in order on a fresh lab and assemble the report."""
    try:
        lab = build_lab(config)
        lab.bring_links_open()
    except (LabError, ValueError) as exc:
        raise CampaignError(f"campaign setup failed: {exc}") from exc

    findings: list[Finding] = []
    results: list[object] = []
    attack_dicts: list[dict] = []
    captures: list[tuple[int, list[CaptureRecord]]] = []
    for index, spec in enumerate(config.attacks):
        if isinstance(spec, FloodSpec):
            result, new_findings = run_flood(lab, spec)
        elif isinstance(spec, InterceptSpec):
            result, new_findings, records = run_intercept(lab, spec)
            captures.append((index, records))
        elif isinstance(spec, FuzzSpec):
            if spec.seed is None:
                spec = replace(spec, seed=_derived_fuzz_seed(config.seed, index))
            result, new_findings = run_fuzz(lab, spec)
        else:  # pragma: no cover - config layer rejects unknown kinds
            raise CampaignError(f"unknown attack spec {spec!r}")
        results.append(result)
        findings.extend(new_findings)
        attack_dicts.append({"kind": _kind_name(spec), "result": result.to_dict()})

    for i, finding in enumerate(findings, start=1):
        finding.id = i
        finding.taxonomy = classify(finding)

    stats = lab.sim.stats
    report = Report(
        tool_version=TOOL_VERSION,
        phase=config.phase,
        seed=config.seed,
        config=config.echo_dict(),
        attacks=attack_dicts,
        findings=[f.to_dict() for f in findings],
        stats={
            "events_processed": stats.events_processed,
            "messages_delivered": stats.delivered,
            "messages_lost": stats.lost,
            "sends": stats.sends,
            "clock_end_us": lab.sim.clock,
        },
    )

    run = CampaignRun(
        config=config, lab=lab, report=report, findings=findings, results=results
    )
    if write_files:
        out = Path(out_dir or config.output_path)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(render_report(report, "json"))
        (out / "report.txt").write_text(render_report(report, "text"))
        for index, records in captures:
            write_capture(out / f"intercept-{index}.dcap", records)
        run.out_dir = out
    return run


def _kind_name(spec) -> str:
    if isinstance(spec, FloodSpec):
        return "flood"
    if isinstance(spec, InterceptSpec):
        return "intercept"
    return "fuzz"
