"""Command-line entry point: one subcommand per pipeline stage.

Exit codes::

    0  success
    1  unexpected error
    2  invalid input data or configuration
    3  a prerequisite stage is missing or stale
    4  the oracle backend could not be reached
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config, parse_override
from .oracle import OracleError, TransportError
from .pipeline import STAGES, MissingPrerequisite, Pipeline, ValidationFailure
from .synthetic import CORPUS_SKILL_WEIGHTS, make_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_PREREQUISITE = 3
EXIT_TRANSPORT = 4

log = logging.getLogger("vtgcurate.cli")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run-dir", required=True, type=Path, help="run directory (created if missing)")
    p.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one config field, e.g. tau=0.1 or oracle.backend=remote (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtgcurate", description="Curate and schedule temporal grounding data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a manifest into the run directory")
    p.add_argument("manifest", type=Path)
    p.add_argument("--strict", action="store_true", help="fail if any record is rejected")
    _add_common(p)

    for stage, text in (
        ("reflect", "flag partially annotated samples by boundary reflection"),
        ("estimate", "score zero-shot difficulty with top-k grounding"),
        ("curate", "draw the curated subset from the clean pool"),
        ("schedule", "emit the masking curriculum plan"),
        ("simulate", "run the synthetic training loop with and without masking"),
        ("report", "assemble report tables"),
    ):
        _add_common(sub.add_parser(stage, help=text))

    p = sub.add_parser("eval", help="grounding metrics for zero-shot or supplied predictions")
    p.add_argument("--predictions", type=Path, help="JSONL with id and pred [start, end] or raw text")
    p.add_argument("--rollouts", type=Path, help="JSONL rollout transcripts: sample_id, step, texts, optional window")
    _add_common(p)

    p = sub.add_parser("run", help="ingest a manifest and run every stage in order")
    p.add_argument("manifest", type=Path)
    p.add_argument("--until", choices=STAGES, default="report", help="last stage to run")
    _add_common(p)

    p = sub.add_parser("synth", help="write a planted synthetic corpus with a simulator world file")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("-n", type=int, default=200, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pas-rate", type=float, default=0.4)
    p.add_argument(
        "--skill-weights", type=float, nargs=4, default=list(CORPUS_SKILL_WEIGHTS),
        metavar=("W0", "W1", "W2", "W3"), help="mixing weights over the simulator skill levels",
    )
    return parser


def _pipeline(args) -> Pipeline:
    overrides = dict(parse_override(o) for o in args.overrides)
    cfg = load_config(args.config, overrides)
    return Pipeline(args.run_dir, cfg)


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2, default=str))


def _summary(result: dict) -> dict:
    keep = ("stage", "fingerprint", "skipped", "report", "sections")
    return {k: result[k] for k in keep if k in result}


def _run(args) -> int:
    if args.command == "synth":
        corpus = make_corpus(args.n, seed=args.seed, pas_rate=args.pas_rate, skill_weights=args.skill_weights)
        args.out.mkdir(parents=True, exist_ok=True)
        corpus.write(args.out / "manifest.jsonl", args.out / "world.jsonl")
        print(f"wrote {len(corpus.samples)} samples to {args.out}")
        return EXIT_OK

    with _pipeline(args) as pipe:
        if args.command == "ingest":
            result = pipe.run_stage("ingest", manifest=args.manifest)
            _print(_summary(result))
            if args.strict and result.get("report", {}).get("rejected"):
                return EXIT_VALIDATION
            return EXIT_OK
        if args.command == "run":
            stages = STAGES[: STAGES.index(args.until) + 1]
            results = pipe.run_all(args.manifest, stages)
            _print({k: _summary(v) for k, v in results.items()})
            return EXIT_OK
        kwargs = {"predictions": args.predictions, "rollouts": args.rollouts} if args.command == "eval" else {}
        _print(_summary(pipe.run_stage(args.command, **kwargs)))
        return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREREQUISITE
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TransportError as exc:
        print(f"error: oracle unreachable: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (OracleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report anything else with a non-zero code
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
