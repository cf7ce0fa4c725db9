"""
Campaign Configuration Module
Settings of one fuzzing campaign and the four named configurations.

    A  greybox fuzzing with demand-driven sequences, no prediction
    B  A plus iterative input prediction
    C  B with a single Secant step per prediction
    D  A without demand gating: sequence operations always on, whole-sequence paths
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional

from contract_parser import Contract
from contract_vm import PathScope, STEP_BUDGET
from cost_metrics import MergePolicy
from input_predictor import DEFAULT_SECANT_ITERATIONS
from sequence_fuzzer import MAX_SEQUENCE_LENGTH
from value_domain import WORD_BITS, to_unsigned

DEFAULT_AGGRESSIVE_PROBABILITY = 0.125
DEFAULT_ENERGY_BASE = 8
DEFAULT_ENERGY_CAP = 1024


class Configuration(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


@dataclass(frozen=True)
class CampaignConfig:
    configuration: Configuration = Configuration.B
    rng_seed: int = 0
    max_executions: Optional[int] = 100_000
    max_seconds: Optional[float] = None
    max_sequence_length: int = MAX_SEQUENCE_LENGTH
    aggressive_probability: float = DEFAULT_AGGRESSIVE_PROBABILITY
    attack_slot: Optional[int] = None
    harvest_literals: bool = True
    secant_iterations: int = DEFAULT_SECANT_ITERATIONS
    prediction: bool = True
    path_scope: PathScope = PathScope.LAST_TX
    unconditional_sequences: bool = False
    merge_policy: MergePolicy = MergePolicy.MIN
    step_budget: int = STEP_BUDGET
    step_budget_is_bug: bool = True
    energy_base: int = DEFAULT_ENERGY_BASE
    energy_cap: int = DEFAULT_ENERGY_CAP
    record_wall_time: bool = False

    def resolved(self) -> "CampaignConfig":
        """Apply the invariants each named configuration imposes."""
        config = self
        if config.configuration in (Configuration.A, Configuration.D):
            config = replace(config, prediction=False)
        if config.configuration is Configuration.C:
            config = replace(config, secant_iterations=1)
        if config.configuration is Configuration.D:
            config = replace(config, path_scope=PathScope.WHOLE_SEQUENCE, unconditional_sequences=True, aggressive_probability=0.0)
        if config.max_executions is None and config.max_seconds is None:
            raise ValueError("a campaign needs an execution or wall-time budget")
        if not 0.0 <= config.aggressive_probability <= 1.0:
            raise ValueError("aggressive probability must lie in [0, 1]")
        if config.max_sequence_length < 1:
            raise ValueError("maximum sequence length must be at least 1")
        if config.secant_iterations < 1:
            raise ValueError("at least one Secant iteration is required")
        return config

    def choose_attack_slot(self, contract: Contract, rng: random.Random) -> int:
        """Configured attack slot, or one drawn uniformly from the slots the layout does not use."""
        if self.attack_slot is not None:
            return to_unsigned(self.attack_slot)
        static = contract.static_slots()
        while True:
            slot = rng.getrandbits(WORD_BITS)
            if slot not in static:
                return slot

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Enum):
                data[key] = value.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CampaignConfig":
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        if "configuration" in known:
            known["configuration"] = Configuration(known["configuration"])
        if "path_scope" in known:
            known["path_scope"] = PathScope(known["path_scope"])
        if "merge_policy" in known:
            known["merge_policy"] = MergePolicy(known["merge_policy"])
        return cls(**known)

    @classmethod
    def from_args(cls, args) -> "CampaignConfig":
        """Build a config from parsed command-line arguments."""
        return cls(
            configuration=Configuration(args.config),
            rng_seed=args.seed,
            max_executions=args.max_execs,
            max_seconds=args.max_seconds,
            max_sequence_length=args.max_seq_len,
            aggressive_probability=args.aggressive_prob,
            attack_slot=args.attack_slot,
            harvest_literals=not args.no_literal_harvest,
            secant_iterations=args.secant_iters,
            merge_policy=MergePolicy(args.merge_policy),
            step_budget_is_bug=not args.no_step_budget_bugs,
            record_wall_time=args.wall_clock,
        ).resolved()
