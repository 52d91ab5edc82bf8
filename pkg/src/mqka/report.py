"""Scenario runner and the JSON run report."""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import __version__
from .adversary import CollusionAttack, CollusionPlan, InterceptResendEve
from .cluster import UNIFORM, ClusterParams
from .protocol import IMPROVED, ORIGINAL, ConfigError, ProtocolConfig, Ring, RunOutcome
from .qcore import RandomSource

SCENARIOS = (
    "honest-original",
    "honest-improved",
    "collusion-original",
    "collusion-improved",
    "eve-original",
    "eve-improved",
)


def parse_hex_key(text: str) -> np.ndarray:
    """Hex string to bits, 4 bits per digit, most significant first."""
    digits = text.lower().removeprefix("0x")
    if not digits or any(ch not in "0123456789abcdef" for ch in digits):
        raise ValueError(f"not a hex string: {text!r}")
    return np.array([(int(ch, 16) >> s) & 1 for ch in digits for s in (3, 2, 1, 0)], dtype=np.uint8)


def bitstring(bits) -> str:
    return "".join(str(int(b)) for b in bits)


@dataclass
class ScenarioSpec:
    scenario: str = "honest-original"
    participants: int = 4
    clusters: int = 8
    photons: int = 32
    decoys: int = 16
    threshold: float = 0.0
    params: ClusterParams = UNIFORM
    target_key: Optional[str] = None
    trials: int = 1
    seed: int = 0
    eve_fraction: float = 1.0
    shield: bool = True
    transcript: bool = False
    audit: bool = False

    @property
    def protocol(self) -> str:
        return ORIGINAL if self.scenario.endswith("original") else IMPROVED

    @property
    def attack(self) -> str:
        return self.scenario.split("-")[0]

    def config(self) -> ProtocolConfig:
        return ProtocolConfig(
            participants=self.participants,
            clusters=self.clusters,
            photons=self.photons,
            decoys_per_hop=self.decoys,
            error_threshold=self.threshold,
            params=self.params,
            seed=self.seed,
            h_shield=self.shield,
            audit=self.audit,
        )

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.trials < 1:
            raise ConfigError("trials", f"need at least one trial, got {self.trials}")
        if not 0.0 <= self.eve_fraction <= 1.0:
            raise ConfigError("eve-fraction", f"must be in [0, 1], got {self.eve_fraction}")
        self.config().validate(self.protocol)
        if self.target_key is not None:
            if self.attack != "collusion":
                raise ConfigError("target-key", "only collusion scenarios take a target key")
            try:
                bits = parse_hex_key(self.target_key)
            except ValueError as exc:
                raise ConfigError("target-key", str(exc)) from exc
            want = self.config().key_length(self.protocol)
            if bits.size != want:
                raise ConfigError("target-key", f"{bits.size} bits given, final key has {want}")

    def echo(self) -> dict:
        out = asdict(self)
        out["params"] = list(self.params.as_tuple())
        return out


def _adversary(spec: ScenarioSpec):
    if spec.attack == "collusion":
        key = parse_hex_key(spec.target_key) if spec.target_key else None
        return CollusionAttack(CollusionPlan.antipodal(spec.participants, target_key=key))
    if spec.attack == "eve":
        return InterceptResendEve(spec.eve_fraction)
    return None


def run_trial(spec: ScenarioSpec, trial: int) -> RunOutcome:
    rng = RandomSource.for_trial(spec.seed, trial)
    return Ring(spec.config(), spec.protocol, _adversary(spec), rng).run()


def summarize(trial: int, outcome: RunOutcome, with_transcript: bool = False) -> dict:
    events = outcome.detection_events
    out = {
        "trial": trial,
        "aborted": outcome.aborted,
        "abort_hop": None if outcome.abort_event is None else outcome.abort_event.as_dict(),
        "agreement": outcome.agreement,
        "correct": outcome.correct,
        "key_bits": int(outcome.kept_mask.sum()),
        "discarded_positions": list(outcome.discarded_positions),
        "hops_checked": len(events),
        "hops_detected": sum(e.detected for e in events),
        "decoys_checked": sum(e.decoys for e in events),
        "decoy_errors": sum(e.errors for e in events),
        "final_keys": [None if k is None else bitstring(k) for k in outcome.final_keys],
        "adversary": outcome.adversary,
        "adversary_metrics": outcome.adversary_metrics,
    }
    if with_transcript:
        out["transcript"] = outcome.transcript
    return out


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _std(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.std(values)) if values else None


def aggregate(trials: list[dict], attack: str) -> dict:
    n = len(trials)
    hops = sum(t["hops_checked"] for t in trials)
    decoys = sum(t["decoys_checked"] for t in trials)
    agg = {
        "trials": n,
        "agreement_rate": sum(t["agreement"] for t in trials) / n,
        "correctness_rate": sum(t["correct"] for t in trials) / n,
        "abort_rate": sum(t["aborted"] for t in trials) / n,
        "detection_rate": sum(t["hops_detected"] > 0 for t in trials) / n,
        "per_hop_detection_rate": sum(t["hops_detected"] for t in trials) / hops if hops else 0.0,
        "per_decoy_error_rate": sum(t["decoy_errors"] for t in trials) / decoys if decoys else 0.0,
        "mean_key_bits": float(np.mean([t["key_bits"] for t in trials])),
        "manipulation_success_rate": None,
        "extraction_accuracy_mean": None,
        "extraction_accuracy_std": None,
    }
    if attack == "collusion":
        metrics = [t["adversary_metrics"] for t in trials]
        agg["manipulation_success_rate"] = sum(m["manipulation_success"] for m in metrics) / n
        accs = [m["extraction_accuracy"] for m in metrics]
        agg["extraction_accuracy_mean"] = _mean(accs)
        agg["extraction_accuracy_std"] = _std(accs)
    return agg


def run_scenario(spec: ScenarioSpec, timestamp: Optional[str] = None) -> dict:
    """Execute all trials of ``spec`` and return the report document."""
    spec.validate()
    trials = [summarize(t, run_trial(spec, t), spec.transcript) for t in range(spec.trials)]
    return {
        "version": __version__,
        "generated_at": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": spec.seed,
        "spec": spec.echo(),
        "aggregate": aggregate(trials, spec.attack),
        "trials": trials,
    }


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("non-finite number in report")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_finite(report), indent=2, sort_keys=True) + "\n"


def report_schema() -> dict:
    return json.loads(resources.files("mqka").joinpath("report_schema.json").read_text())
