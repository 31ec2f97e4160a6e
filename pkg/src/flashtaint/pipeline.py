"""Single-target analysis and the batch runner shared by the CLI and the service."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bytecode import Selector
from .callgraph import DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES, AnalysisError, ContractRef, SubCallGraph, build_scg
from .dataset import IncidentRecord
from .state import StateError, StateProvider, normalize_address
from .taint import DetectionReport, TaintConfig, analyze

log = logging.getLogger(__name__)

EXIT_NOT_DETECTED = 0
EXIT_VULNERABLE = 1
EXIT_ERROR = 2
EXIT_USAGE = 64
EXIT_DATA = 65


@dataclass(frozen=True, slots=True)
class Limits:
    max_depth: int = DEFAULT_MAX_DEPTH
    max_nodes: int = DEFAULT_MAX_NODES


@dataclass
class TargetResult:
    scg: SubCallGraph
    report: DetectionReport

    @property
    def exit_code(self) -> int:
        return EXIT_VULNERABLE if self.report.findings else EXIT_NOT_DETECTED


def report_name(address: str, selector: Selector, block: int) -> str:
    return f"{normalize_address(address)}-{selector.hex}-{block}.report"


def analyze_target(
    state: StateProvider,
    logic_address: str,
    selector: Selector,
    block: int,
    config: TaintConfig,
    storage_address: str | None = None,
    limits: Limits = Limits(),
) -> TargetResult:
    """Build the sub-call graph for one entry point and run taint detection.

    Raises AnalysisError when the root cannot be analyzed at all.
    """
    logic = normalize_address(logic_address)
    storage = normalize_address(storage_address) if storage_address else logic
    try:
        scg = build_scg(ContractRef(logic, storage, block), selector, state, limits.max_depth, limits.max_nodes)
    except StateError as exc:
        raise AnalysisError(str(exc)) from exc
    return TargetResult(scg, analyze(scg, config))


@dataclass
class IncidentOutcome:
    record: IncidentRecord
    report: DetectionReport | None
    error: str | None = None

    @property
    def status(self) -> str:
        if self.report is None:
            return "errored"
        return "detected" if self.report.findings else "missed"

    @property
    def verdict(self) -> str | None:
        return self.report.verdict if self.report else None

    @property
    def matches_expected(self) -> bool | None:
        if self.record.expected_verdict is None:
            return None
        return self.verdict == self.record.expected_verdict

    @property
    def report_name(self) -> str:
        r = self.record
        return report_name(r.logic_address, r.entry_selector, r.block)

    def to_json(self) -> dict:
        r = self.record
        return {
            "date": r.date.isoformat(),
            "name": r.name,
            "loss_usd": r.loss_usd,
            "logic_address": r.logic_address,
            "storage_address": r.storage_address,
            "entry_selector": r.entry_selector.hex,
            "block": r.block,
            "status": self.status,
            "verdict": self.verdict,
            "error": self.error,
            "expected_verdict": r.expected_verdict,
            "matches_expected": self.matches_expected,
            "report": self.report_name if self.report else None,
        }


@dataclass
class BatchSummary:
    outcomes: list[IncidentOutcome]
    profile: str

    @property
    def totals(self) -> dict[str, int]:
        counts = {"detected": 0, "missed": 0, "errored": 0}
        for o in self.outcomes:
            counts[o.status] += 1
        return counts

    @property
    def detection_rate(self) -> float | None:
        t = self.totals
        scored = t["detected"] + t["missed"]
        return round(t["detected"] / scored, 6) if scored else None

    @property
    def mismatches(self) -> list[IncidentOutcome]:
        return [o for o in self.outcomes if o.matches_expected is False]

    @property
    def exit_code(self) -> int:
        return EXIT_VULNERABLE if self.mismatches else EXIT_NOT_DETECTED

    def to_json(self) -> dict:
        return {
            "profile": self.profile,
            "incidents": [o.to_json() for o in self.outcomes],
            "totals": self.totals,
            "detection_rate": self.detection_rate,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        rows = [("date", "name", "selector", "status", "expected")]
        for o in self.outcomes:
            exp = o.record.expected_verdict or "-"
            if o.matches_expected is False:
                exp += " (MISMATCH)"
            rows.append((o.record.date.isoformat(), o.record.name, o.record.entry_selector.hex, o.status, exp))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        t = self.totals
        rate = "n/a" if self.detection_rate is None else f"{self.detection_rate:.1%}"
        lines.append(
            f"detected {t['detected']}  missed {t['missed']}  errored {t['errored']}  detection rate {rate}"
        )
        return "\n".join(lines) + "\n"


def run_incident(record: IncidentRecord, state: StateProvider, config: TaintConfig, limits: Limits) -> IncidentOutcome:
    try:
        result = analyze_target(
            state, record.logic_address, record.entry_selector, record.block, config, record.storage_address, limits
        )
    except (AnalysisError, StateError) as exc:
        log.warning("%s: %s", record.name, exc)
        return IncidentOutcome(record, None, str(exc))
    return IncidentOutcome(record, result.report)


def run_batch(
    records: list[IncidentRecord],
    state: StateProvider,
    config: TaintConfig,
    limits: Limits = Limits(),
    parallel: int = 1,
) -> BatchSummary:
    """Analyze every record independently; the result order is by date, not completion."""
    ordered = sorted(records, key=lambda r: r.sort_key)
    if parallel <= 1:
        outcomes = [run_incident(r, state, config, limits) for r in ordered]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(lambda r: run_incident(r, state, config, limits), ordered))
    return BatchSummary(outcomes, config.profile_name)


def write_batch(summary: BatchSummary, out_dir: str | Path) -> list[Path]:
    """One report per analyzed incident plus ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for o in summary.outcomes:
        if o.report is not None:
            path = out / o.report_name
            path.write_text(o.report.dumps())
            written.append(path)
    path = out / "summary.json"
    path.write_text(summary.dumps())
    written.append(path)
    return written
