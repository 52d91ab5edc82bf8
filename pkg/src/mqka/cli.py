"""Command-line front end.

    mqka run --scenario collusion-original --participants 4 --trials 10 --out report.json
    mqka table --params 0.6,0.5,0.4,0.4796
    mqka povm --params skewed

Exit codes: 0 success, 1 invalid input, 2 internal invariant violation.
Party ids in every output are 0-based.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .adversary import AttackError
from .cluster import PRESETS, ClusterParams, build_transition_table
from .povm import LinearlyDependentError, build_usd_povm, family_members
from .protocol import ConfigError, InvariantViolation
from .report import SCENARIOS, ScenarioSpec, dumps, run_scenario

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2

log = logging.getLogger("mqka")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def parse_params(text: str) -> ClusterParams:
    """Preset name or four comma-separated amplitudes (renormalized)."""
    if text in PRESETS:
        return PRESETS[text]
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError("params", f"expected a,b,c,d or one of {sorted(PRESETS)}, got {text!r}") from None
    if len(values) != 4:
        raise ConfigError("params", f"expected four amplitudes, got {len(values)}")
    try:
        return ClusterParams.normalized(*values)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from exc


def _phase_text(phase: complex) -> str:
    if abs(phase.imag) < 1e-9:
        return f"{phase.real:+.0f}"
    return f"{phase.real:+.6f}{phase.imag:+.6f}j"


def dump_transition_table(params: ClusterParams) -> str:
    try:
        table = build_transition_table(params)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from exc
    lines = ["# from nibble to phase  (state ids 1..16)"]
    for t in table:
        lines.append(f"{t.source:>4} {t.nibble:04b} {t.target:>4} {_phase_text(t.phase)}")
    return "\n".join(lines) + "\n"


def dump_povm_stats(params: ClusterParams) -> str:
    lines = [f"# params a,b,c,d = {', '.join(f'{v:.6f}' for v in params.as_tuple())}"]
    for family in (1, 2, 3, 4):
        try:
            m = build_usd_povm(params, family)
        except LinearlyDependentError as exc:
            raise ConfigError("params", str(exc)) from exc
        probs = [m.conclusive_probability(sid) for sid in family_members(family)]
        min_eig = m.min_eigenvalue()
        residual = m.completeness_residual()
        lines.append(
            f"family {family}: states {family_members(family)[0]}-{family_members(family)[-1]}"
            f"  scale {m.scale:.6f}"
            f"  conclusive {min(probs):.6f}..{max(probs):.6f}"
            f"  inconclusive {1 - np.mean(probs):.6f}"
            f"  min_eig {min_eig:+.2e} psd {'ok' if min_eig >= -1e-9 else 'FAIL'}"
            f"  completeness {residual:.2e} {'ok' if residual <= 1e-9 else 'FAIL'}"
        )
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mqka", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario and emit a JSON report")
    run.add_argument("--scenario", choices=SCENARIOS, default="honest-original")
    run.add_argument("--participants", type=int, default=4)
    run.add_argument("--clusters", type=int, default=8, help="cluster states per party (original)")
    run.add_argument("--photons", type=int, default=32, help="single photons per party (improved)")
    run.add_argument("--decoys", type=int, default=16, help="decoy photons per hop")
    run.add_argument("--threshold", type=float, default=0.0, help="abort when a hop's error rate exceeds this")
    run.add_argument("--params", default="uniform", help="a,b,c,d or a preset (uniform, skewed)")
    run.add_argument("--target-key", help="hex target key for collusion scenarios (random per trial if omitted)")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--eve-fraction", type=float, default=1.0)
    run.add_argument("--no-shield", action="store_true", help="improved protocol without random Hadamards")
    run.add_argument("--audit", action="store_true", help="check hidden states against expectations")
    run.add_argument("--transcript", action="store_true", help="include per-trial channel transcripts")
    run.add_argument("--out", type=Path, help="report path (stdout if omitted)")

    for name, helptext in (("table", "dump the derived transition table"), ("povm", "POVM probabilities per family")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--params", default="uniform")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        params = parse_params(args.params)
        if args.command == "table":
            sys.stdout.write(dump_transition_table(params))
            return EXIT_OK
        if args.command == "povm":
            sys.stdout.write(dump_povm_stats(params))
            return EXIT_OK
        spec = ScenarioSpec(
            scenario=args.scenario,
            participants=args.participants,
            clusters=args.clusters,
            photons=args.photons,
            decoys=args.decoys,
            threshold=args.threshold,
            params=params,
            target_key=args.target_key,
            trials=args.trials,
            seed=args.seed,
            eve_fraction=args.eve_fraction,
            shield=not args.no_shield,
            transcript=args.transcript,
            audit=args.audit,
        )
        text = dumps(run_scenario(spec))
    except ConfigError as exc:
        print(f"mqka: invalid {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvariantViolation, AttackError) as exc:
        print(f"mqka: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if args.out:
        args.out.write_text(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
