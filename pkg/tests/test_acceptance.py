"""Acceptance criteria C1-C7, each printing one PASS/FAIL line with its runtime.

Run alone with ``pytest tests/test_acceptance.py -s -q``; the verdict lines
are printed even without ``-s``.
"""

import itertools
import math
import time
from functools import reduce

import numpy as np
import pytest

from mqka.adversary import CollusionAttack, CollusionPlan, InterceptResendEve
from mqka.cluster import NIBBLES, SKEWED, STATE_IDS, UNIFORM, encode_nibble, make_cluster_state, nibble_to_oppair
from mqka.povm import build_usd_povm, family_members, povm_measure
from mqka.protocol import ProtocolConfig, decoy_hop_trial, run_improved, run_original
from mqka.qcore import RandomSource, fidelity_up_to_phase
from mqka.report import SCENARIOS, ScenarioSpec, dumps, run_scenario

STAMP = "2000-01-01T00:00:00+00:00"

PAULI = {
    "I": np.eye(2),
    "SZ": np.diag([1.0, -1.0]),
    "SX": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "ISY": np.array([[0.0, 1.0], [-1.0, 0.0]]),
}
ENCODING_TABLE = {
    0b0000: ("I", "I"), 0b0001: ("I", "SZ"), 0b0010: ("SZ", "I"), 0b0011: ("SZ", "SZ"),
    0b0100: ("SZ", "SX"), 0b0101: ("SZ", "ISY"), 0b0110: ("I", "SX"), 0b0111: ("I", "ISY"),
    0b1000: ("SX", "SZ"), 0b1001: ("SX", "I"), 0b1010: ("ISY", "SZ"), 0b1011: ("ISY", "I"),
    0b1100: ("ISY", "ISY"), 0b1101: ("ISY", "SX"), 0b1110: ("SX", "ISY"), 0b1111: ("SX", "SX"),
}  # fmt: skip


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


class Criterion:
    def __init__(self, capsys, label, budget):
        self.capsys, self.label, self.budget = capsys, label, budget
        self.failures = []

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        if self.budget is not None and elapsed >= self.budget:
            self.failures.append(f"runtime {elapsed:.1f}s over {self.budget}s budget")
        verdict = "PASS" if not self.failures else "FAIL"
        with self.capsys.disabled():
            print(f"\n[{verdict}] {self.label} ({elapsed:.2f}s)" + "".join(f"\n    - {f}" for f in self.failures))
        assert not self.failures, "; ".join(self.failures)
        return False


def test_c1_encoding_table(capsys):
    with Criterion(capsys, "C1 encoding table and XOR homomorphism", budget=1.0) as c:
        for nib, ops in ENCODING_TABLE.items():
            c.check(nibble_to_oppair(nib) == ops, f"row {nib:04b}")
        for sid in STATE_IDS:
            psi = make_cluster_state(UNIFORM, sid)
            once = {n: encode_nibble(psi, n) for n in NIBBLES}
            for n1, n2 in itertools.product(NIBBLES, repeat=2):
                fid = fidelity_up_to_phase(encode_nibble(once[n1], n2), once[n1 ^ n2])
                c.check(abs(fid - 1) <= 1e-9, f"state {sid} nibbles {n1:04b},{n2:04b}: fidelity {fid}")


def test_c2_povm_soundness(capsys):
    with Criterion(capsys, "C2 POVM completeness, positivity, no-error", budget=30.0) as c:
        rng = RandomSource(2)
        for params, name in ((UNIFORM, "uniform"), (SKEWED, "skewed")):
            for family in (1, 2, 3, 4):
                m = build_usd_povm(params, family)
                c.check(m.completeness_residual() <= 1e-9, f"{name} family {family} completeness")
                c.check(m.min_eigenvalue() >= -1e-9, f"{name} family {family} positivity")
                members = family_members(family)
                states = {sid: make_cluster_state(params, sid) for sid in members}
                wrong = 0
                for _ in range(10_000):
                    sid = members[rng.integer(4)]
                    out = povm_measure(states[sid], m, rng)
                    wrong += out.conclusive and out.state_id != sid
                c.check(wrong == 0, f"{name} family {family}: {wrong} misidentifications")
                if params is UNIFORM:
                    for sid in members:
                        p = m.conclusive_probability(sid)
                        c.check(abs(p - 1) <= 1e-9, f"uniform state {sid} conclusive probability {p}")


def test_c3_original_correctness(capsys):
    with Criterion(capsys, "C3 original protocol correctness (N 3-6, n 1/4/8, 100 trials)", budget=60.0) as c:
        for n_parties, clusters in itertools.product((3, 4, 5, 6), (1, 4, 8)):
            agreed = 0
            for trial in range(100):
                out = run_original(
                    ProtocolConfig(participants=n_parties, clusters=clusters),
                    rng=RandomSource.for_trial(300 + 10 * n_parties + clusters, trial),
                )
                expected = reduce(np.bitwise_xor, out.private_keys)[out.kept_mask]
                agreed += all(np.array_equal(k, expected) for k in out.final_keys)
            c.check(agreed == 100, f"N={n_parties} n={clusters}: agreement {agreed}/100")


def test_c4_collusion_reproduction(capsys):
    with Criterion(capsys, "C4 collusion attack on original protocol (N 4/5/6, 100 trials)", budget=60.0) as c:
        for n_parties in (4, 5, 6):
            wins = detected = 0
            for trial in range(100):
                # no target given: each trial draws a fresh random target key
                attack = CollusionAttack(CollusionPlan.antipodal(n_parties))
                out = run_original(ProtocolConfig(participants=n_parties), attack, RandomSource.for_trial(400 + n_parties, trial))
                honest = [p for p in range(n_parties) if p not in attack.colluders]
                wins += not out.aborted and all(
                    np.array_equal(out.final_keys[p], attack.target[out.kept_mask]) for p in honest
                )
                detected += any(e.errors for e in out.detection_events)
            c.check(wins == 100, f"N={n_parties}: manipulation success {wins}/100")
            c.check(detected == 0, f"N={n_parties}: {detected} trials with decoy errors")


def test_c5_decoy_statistics(capsys):
    with Criterion(capsys, "C5 decoy detection statistics under intercept-resend", budget=60.0) as c:
        rng = RandomSource(5)
        eve = InterceptResendEve(1.0, RandomSource(55))
        errors = decoys = 0
        while decoys < 10_000:
            event = decoy_hop_trial(100, rng, eve.channel_hook)
            errors += event.errors
            decoys += event.decoys
        rate = errors / decoys
        c.check(abs(rate - 0.25) <= three_sigma(0.25, decoys), f"per-decoy detection {rate:.4f} vs 0.25")
        n = 10_000
        for d in (1, 4, 16):
            passes = sum(not decoy_hop_trial(d, rng, eve.channel_hook).detected for _ in range(n))
            p = 0.75**d
            c.check(abs(passes / n - p) <= three_sigma(p, n), f"d={d}: hop pass {passes / n:.5f} vs {p:.5f}")


def parity_coin_oracle(segment_encoders, length, runs, rng):
    """Accuracy and manipulation success from the H-parity/coin model alone."""
    accs, wins = [], 0
    for _ in range(runs):
        wrong_total = np.zeros(length, dtype=bool)
        wrong_bits = 0
        for encoders in segment_encoders:
            odd = rng.integers(0, 2, size=(encoders, length)).sum(axis=0) % 2 == 1
            wrong = odd & (rng.integers(0, 2, size=length) == 1)
            wrong_bits += int(wrong.sum())
            wrong_total ^= wrong
        accs.append(1 - wrong_bits / (length * len(segment_encoders)))
        wins += not wrong_total.any()
    return np.array(accs), wins / runs


def test_c6_countermeasure(capsys):
    with Criterion(capsys, "C6 improved protocol resists the replayed attack", budget=300.0) as c:
        for n_parties, length in itertools.product((3, 4, 5, 6), (8, 32)):
            agreed = 0
            for trial in range(100):
                out = run_improved(
                    ProtocolConfig(participants=n_parties, photons=length),
                    rng=RandomSource.for_trial(600 + 100 * n_parties + length, trial),
                )
                agreed += out.correct
            c.check(agreed == 100, f"honest N={n_parties} L={length}: agreement {agreed}/100")

        runs = 1000
        accs = np.array(
            [
                run_improved(ProtocolConfig(photons=64), CollusionAttack(CollusionPlan.antipodal(4)), RandomSource.for_trial(61, t))
                .adversary_metrics["extraction_accuracy"]
                for t in range(runs)
            ]
        )
        # N=4 with colluders {0, 2}: each colluder segment holds one honest encoder
        oracle, _ = parity_coin_oracle([1, 1], 64, 20_000, np.random.default_rng(62))
        sigma = math.sqrt(accs.var(ddof=1) / runs + oracle.var(ddof=1) / oracle.size)
        c.check(
            abs(accs.mean() - oracle.mean()) <= 3 * sigma,
            f"extraction accuracy {accs.mean():.4f} vs oracle {oracle.mean():.4f} (3 sigma {3 * sigma:.4f})",
        )
        c.check(accs.max() < 1.0, "extraction accuracy reached 1 with the shield on")

        for length in (16, 32):
            wins = sum(
                run_improved(
                    ProtocolConfig(photons=length), CollusionAttack(CollusionPlan.antipodal(4)), RandomSource.for_trial(63 + length, t)
                ).adversary_metrics["manipulation_success"]
                for t in range(1000)
            )
            c.check(wins / 1000 < 0.05, f"L={length}: manipulation success {wins / 1000:.3f}")

        wins = 0
        for t in range(100):
            out = run_improved(
                ProtocolConfig(photons=64, h_shield=False), CollusionAttack(CollusionPlan.antipodal(4)), RandomSource.for_trial(65, t)
            )
            wins += out.adversary_metrics["manipulation_success"]
        c.check(wins == 100, f"shield disabled: manipulation success {wins}/100")


def test_c7_determinism(capsys):
    with Criterion(capsys, "C7 same seed reproduces reports bit-identically", budget=None) as c:
        for scenario in SCENARIOS:
            spec = dict(scenario=scenario, participants=5, clusters=3, photons=12, trials=5, seed=77, params=SKEWED)
            a = run_scenario(ScenarioSpec(**spec), timestamp=STAMP)
            b = run_scenario(ScenarioSpec(**spec), timestamp=STAMP)
            c.check(dumps(a["aggregate"]) == dumps(b["aggregate"]), f"{scenario}: aggregate differs")
            c.check(dumps(a) == dumps(b), f"{scenario}: report bytes differ")
