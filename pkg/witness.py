"""
Witness Module
Standalone, replayable records of bug findings.

A witness file carries the contract source, the campaign configuration,
the transaction sequence and the attack slot, so it can be re-executed
without the campaign that produced it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from bug_oracles import BugFinding, BugKind, BugOracle
from campaign_config import CampaignConfig
from contract_parser import Contract, SourceLoc, parse_contract
from contract_vm import ContractVM, Instrumentation, Transaction
from version import APP_NAME, APP_VERSION

logger = logging.getLogger(__name__)

WITNESS_FORMAT = 1


class WitnessError(Exception):
    """Malformed witness file or one that does not belong to this contract."""


class WitnessVersionError(WitnessError):
    """Witness produced by a different tool version."""


@dataclass
class WitnessRecord:
    kind: BugKind
    loc: SourceLoc
    sequence: Tuple[Transaction, ...]
    contract_source: str
    contract_digest: str
    config: Dict[str, Any]
    attack_slot: Optional[int] = None
    seed: int = 0
    exec_index: int = 0
    tool_version: str = APP_VERSION

    @classmethod
    def from_finding(cls, finding: BugFinding, contract: Contract, config: CampaignConfig) -> "WitnessRecord":
        if finding.witness is None:
            raise WitnessError(f"{finding.kind.value} at {finding.loc} has no witness sequence")
        return cls(
            kind=finding.kind,
            loc=finding.loc,
            sequence=tuple(finding.witness.sequence),
            contract_source=contract.source,
            contract_digest=contract.digest,
            config=config.to_dict(),
            attack_slot=finding.witness.attack_slot,
            seed=finding.witness.seed,
            exec_index=finding.witness.exec_index,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": APP_NAME,
            "version": self.tool_version,
            "format": WITNESS_FORMAT,
            "finding": {"kind": self.kind.value, "loc": str(self.loc)},
            "sequence": [tx.to_dict() for tx in self.sequence],
            "attackSlot": self.attack_slot,
            "seed": self.seed,
            "execIndex": self.exec_index,
            "config": self.config,
            "contract": {"digest": self.contract_digest, "source": self.contract_source},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "WitnessRecord":
        try:
            finding = data["finding"]
            contract = data["contract"]
            return cls(
                kind=BugKind(finding["kind"]),
                loc=SourceLoc.parse(finding["loc"]),
                sequence=tuple(Transaction.from_dict(tx) for tx in data["sequence"]),
                contract_source=contract["source"],
                contract_digest=contract["digest"],
                config=dict(data.get("config", {})),
                attack_slot=data.get("attackSlot"),
                seed=data.get("seed", 0),
                exec_index=data.get("execIndex", 0),
                tool_version=data["version"],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise WitnessError(f"malformed witness: {e}") from e


@dataclass
class ReplayReport:
    expected: Tuple[BugKind, SourceLoc]
    findings: List[BugFinding] = field(default_factory=list)

    @property
    def reproduced(self) -> bool:
        return any(finding.key == self.expected for finding in self.findings)

    def describe(self) -> str:
        kind, loc = self.expected
        if self.reproduced:
            return f"reproduced: {kind.value} at {loc}"
        observed = ", ".join(f"{f.kind.value} at {f.loc}" for f in self.findings) or "no findings"
        return f"not reproduced: expected {kind.value} at {loc}, observed {observed}"


def save_witness(record: WitnessRecord, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record.to_dict(), handle, indent=2)
        handle.write("\n")
    return path


def load_witness(path: Path) -> WitnessRecord:
    """
    Read a witness file.

    Raises:
        OSError: the file cannot be read
        WitnessVersionError: written by another tool version
        WitnessError: not a witness file
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as e:
            raise WitnessError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(data, dict) or data.get("tool") != APP_NAME:
        raise WitnessError(f"{path}: not a {APP_NAME} witness")
    if data.get("version") != APP_VERSION:
        raise WitnessVersionError(f"{path}: written by version {data.get('version')}, this is {APP_VERSION}")
    return WitnessRecord.from_dict(data)


def replay(record: WitnessRecord) -> ReplayReport:
    """
    Re-execute a witness sequence from a fresh deployment and run the oracles on it.

    Raises:
        ContractError: the embedded source no longer parses
        WitnessError: the embedded source does not match the recorded digest
        DeploymentError: the constructor aborts
    """
    contract = parse_contract(record.contract_source)
    if contract.digest != record.contract_digest:
        raise WitnessError("contract source does not match the recorded digest")
    config = CampaignConfig.from_dict(record.config)
    vm = ContractVM(
        contract,
        Instrumentation(attack_slot=record.attack_slot, merge_policy=config.merge_policy, step_budget=config.step_budget),
    )
    try:
        results = vm.run_sequence(record.sequence)
    except ValueError as e:
        raise WitnessError(f"witness sequence does not fit the contract: {e}") from e
    oracle = BugOracle(record.attack_slot, config.step_budget_is_bug)
    report = ReplayReport((record.kind, record.loc))
    for finding in oracle.check_all(results):
        if oracle.dedup(finding):
            report.findings.append(finding)
    logger.info(report.describe())
    return report


def write_witnesses(findings: List[BugFinding], contract: Contract, config: CampaignConfig, directory: Path) -> List[Path]:
    """One witness file per finding, named after contract, kind, location and seed."""
    paths = []
    for finding in findings:
        name = f"{contract.name}-{finding.kind.value}-{finding.loc.line}_{finding.loc.col}-seed{config.rng_seed}.json"
        paths.append(save_witness(WitnessRecord.from_finding(finding, contract, config), Path(directory) / name))
    return paths
