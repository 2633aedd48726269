"""Pass/fail verdicts over finished runs: no-disadvantage against a legacy reference,
TBF conformance and the two-stage audit."""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ReportError
from .metrics import ReportRow
from .models import PlanKind

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.02


@dataclass(frozen=True)
class DisadvantageVerdict:
    subscriber: int
    goodput_bps: int
    reference_bps: int
    passed: bool


def no_disadvantage_check(run_rows: Iterable[ReportRow], reference_rows: Iterable[ReportRow],
                          epsilon: float = DEFAULT_EPSILON) -> list[DisadvantageVerdict]:
    """One verdict per shared-plan subscriber: goodput >= (1 - epsilon) x its legacy-reference goodput."""
    reference = {row.subscriber: row for row in reference_rows}
    verdicts = []
    for row in run_rows:
        if row.plan != PlanKind.SHARED.value:
            continue
        ref = reference.get(row.subscriber)
        if ref is None:
            raise ReportError(f"Reference run has no row for subscriber {row.subscriber}")
        passed = row.goodput_bps >= (1.0 - epsilon) * ref.goodput_bps
        verdicts.append(DisadvantageVerdict(row.subscriber, row.goodput_bps, ref.goodput_bps, passed))
    return verdicts


def load_results(path: str) -> list[ReportRow]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return [ReportRow.from_csv(record) for record in csv.DictReader(f)]
    except FileNotFoundError:
        raise ReportError(f"Missing results file: {path}") from None
    except (KeyError, ValueError) as exc:
        raise ReportError(f"Unreadable results file {path}: {exc}") from None


def load_conformance(path: str) -> dict[str, bool]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return {record["element"]: record["passed"] == "1" for record in csv.DictReader(f)}
    except FileNotFoundError:
        raise ReportError(f"Missing conformance file: {path}") from None


def load_audit_violations(path: str) -> int:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return int(json.load(f)["stage_audit"]["violations"])
    except FileNotFoundError:
        raise ReportError(f"Missing summary file: {path}") from None
    except (KeyError, ValueError) as exc:
        raise ReportError(f"Unreadable summary file {path}: {exc}") from None


@dataclass
class CheckResult:
    conformance: dict[str, bool]
    audit_violations: int
    disadvantage: list[DisadvantageVerdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (all(self.conformance.values()) and self.audit_violations == 0
                and all(v.passed for v in self.disadvantage))


def check_run(run_dir: str, reference_dir: str, epsilon: float = DEFAULT_EPSILON,
              results_name: str = "results.csv") -> CheckResult:
    for directory in (run_dir, reference_dir):
        if not os.path.isdir(directory):
            raise ReportError(f"Run directory not found: {directory}")
    run_rows = load_results(os.path.join(run_dir, results_name))
    reference_rows = load_results(os.path.join(reference_dir, results_name))
    result = CheckResult(
        conformance=load_conformance(os.path.join(run_dir, "conformance.csv")),
        audit_violations=load_audit_violations(os.path.join(run_dir, "summary.json")),
        disadvantage=no_disadvantage_check(run_rows, reference_rows, epsilon),
    )
    for element, ok in result.conformance.items():
        if not ok:
            logger.info("%s: departures exceed the token bucket envelope", element)
    for v in result.disadvantage:
        logger.info("C-VID %d: %d bit/s vs reference %d bit/s -> %s",
                    v.subscriber, v.goodput_bps, v.reference_bps, "pass" if v.passed else "FAIL")
    return result
