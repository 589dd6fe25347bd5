"""Command-line entry point.

Subcommands: perturb, matrix, stats, verify-dp, attack, sensitivity,
pipeline, ingest. Every subcommand is deterministic given its flags and
--seed, echoes its fully-resolved configuration into output metadata, and
writes output files atomically (temp file + rename).

Exit codes: 2 config/validation error, 3 I/O error, 4 internal assertion.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import analysis, embeddings, pipeline, randomizers, sensitivity
from .errors import ConfigError, InvalidWordIdError, PrivtextError
from .randomizers import Mechanism, MechanismConfig, MHParams
from .samplers import RngStream
from .sensitivity import build_profile

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

SCHEMA_VERSION = 1


def _atomic_write(path: str, text: str) -> None:
    """Write-to-temp-then-rename so failures never leave partial files."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _add_mechanism_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mechanism", default="baseline", choices=randomizers.VARIANTS)
    parser.add_argument("--epsilon", type=float, required=True)
    parser.add_argument("--sigma", type=float, default=None, help="KDE bandwidth (density)")
    parser.add_argument("--beta", type=float, default=None, help="smooth bound exponent (smooth)")
    parser.add_argument("--tau", type=float, default=None, help="truncation radius (trunc_distance)")
    parser.add_argument("--knn", type=int, default=None, help="neighbor count (trunc_knn)")
    parser.add_argument(
        "--strategy", default=None, choices=randomizers.TRUNC_STRATEGIES,
        help="trunc_distance handling of out-of-ball noise",
    )
    parser.add_argument("--mh-burn-in", type=int, default=None)
    parser.add_argument("--mh-thin", type=int, default=None)
    parser.add_argument("--mh-step", type=float, default=None)


def _mechanism_config(args) -> MechanismConfig:
    mh = None
    if any(v is not None for v in (args.mh_burn_in, args.mh_thin, args.mh_step)):
        mh = MHParams(
            burn_in=args.mh_burn_in if args.mh_burn_in is not None else 1000,
            thin=args.mh_thin if args.mh_thin is not None else 10,
            proposal_step=args.mh_step,
        )
    return MechanismConfig(
        variant=args.mechanism,
        epsilon=args.epsilon,
        sigma=args.sigma,
        beta=args.beta,
        tau=args.tau,
        k=args.knn,
        trunc_strategy=args.strategy,
        mh=mh,
    )


def _load_store(args) -> embeddings.EmbeddingStore:
    if not args.embeddings:
        raise ConfigError("--embeddings is required for this subcommand")
    if args.embeddings.endswith(".npz"):
        return embeddings.load_cache(args.embeddings)
    return embeddings.load_embeddings(args.embeddings)


def _resolved(args, config: MechanismConfig | None = None) -> dict:
    meta = {"schema_version": SCHEMA_VERSION, "seed": args.seed, "embeddings": args.embeddings}
    if config is not None:
        meta["mechanism"] = config.to_dict()
    return meta


def _report(args, payload: dict) -> None:
    if args.format == "json":
        _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return
    if args.format == "tsv":
        lines = [f"{k}\t{json.dumps(v, sort_keys=True)}" for k, v in sorted(payload.items())]
        _emit(args, "\n".join(lines) + "\n")
        return
    lines = [f"{k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(payload.items())]
    _emit(args, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_perturb(args) -> int:
    store = _load_store(args)
    config = _mechanism_config(args)
    mech = Mechanism(store, config)
    rng = RngStream(args.seed).fork_named("cli.perturb")
    out_lines = []
    source = open(args.input, encoding="utf-8") if args.input else sys.stdin
    try:
        for lineno, line in enumerate(source, start=1):
            tokens = line.split()
            out_tokens = []
            for token in tokens:
                if not store.has_word(token):
                    if args.skip_oov:
                        out_tokens.append(token)
                        continue
                    raise InvalidWordIdError(
                        f"line {lineno}: out-of-vocabulary token {token!r}"
                    )
                out_tokens.append(store.words[mech.perturb(rng, store.word_id(token))])
            out_lines.append(" ".join(out_tokens))
    finally:
        if args.input:
            source.close()
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    _emit(args, text)
    return 0


def cmd_matrix(args) -> int:
    store = _load_store(args)
    config = _mechanism_config(args)
    rng = RngStream(args.seed).fork_named("cli.matrix")
    matrix = randomizers.build_transition_matrix(store, rng, config, args.samples)
    _emit(args, randomizers.matrix_to_tsv(store, matrix))
    if not args.quiet:
        print(f"wrote {matrix.size}x{matrix.size} matrix, {args.samples} samples/row", file=sys.stderr)
    return 0


def cmd_stats(args) -> int:
    store = _load_store(args)
    config = _mechanism_config(args)
    mech = Mechanism(store, config)
    rng = RngStream(args.seed).fork_named("cli.stats")
    words = [store.word_id(w) for w in args.words] if args.words else range(len(store))
    rows = []
    for w in words:
        st = analysis.deniability_stats(store, rng.fork(int(w)), mech, int(w), args.trials)
        rows.append({**st.to_dict(), "word": store.words[st.word]})
    _report(args, {"metadata": _resolved(args, config), "trials": args.trials, "stats": rows})
    return 0


def cmd_verify_dp(args) -> int:
    store = _load_store(args)
    with open(args.matrix, encoding="utf-8") as fh:
        matrix = randomizers.matrix_from_tsv(store, fh.read())
    report = analysis.verify_metric_dp(matrix, store, args.epsilon)
    payload = report.to_dict()
    payload["worst_triple_words"] = [store.words[i] for i in report.worst_triple]
    _report(args, {"metadata": _resolved(args), **payload})
    return 0


def cmd_attack(args) -> int:
    store = _load_store(args)
    with open(args.matrix, encoding="utf-8") as fh:
        matrix = randomizers.matrix_from_tsv(store, fh.read())
    if args.prior == "uniform":
        prior = np.full(len(store), 1.0 / len(store))
    else:  # zipf:<s>
        s = float(args.prior.split(":", 1)[1])
        prior = np.arange(1, len(store) + 1, dtype=np.float64) ** (-s)
        prior /= prior.sum()
    rng = RngStream(args.seed).fork_named("cli.attack")
    acc = analysis.attack_accuracy(store, rng, matrix, prior, args.trials)
    _report(
        args,
        {
            "metadata": _resolved(args),
            "prior": args.prior,
            "n_trials": args.trials,
            "accuracy": acc,
        },
    )
    return 0


def cmd_sensitivity(args) -> int:
    store = _load_store(args)
    profile = build_profile(store, args.beta)
    _emit(args, sensitivity.profile_tsv(store, profile))
    return 0


def cmd_pipeline(args) -> int:
    store = _load_store(args)
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if args.seed is not None and args.seed_given:
        data["seed"] = args.seed
    config = pipeline.ProtocolConfig.from_dict(data)
    report = pipeline.run_protocol(store, config)
    _emit(args, report.to_json(store))
    return 0


def cmd_ingest(args) -> int:
    store = _load_store(args)
    if not args.out:
        raise ConfigError("ingest requires --out")
    embeddings.save_cache(store, args.out)
    if not args.quiet:
        print(f"cached {len(store)} words, dim {store.dim} -> {args.out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privtext")
    parser.add_argument("--embeddings", help="text embedding file or .npz cache")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", default="json", choices=("json", "tsv", "text"))
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--out", default=None, help="output file (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="perturb whitespace tokens from stdin or a file")
    _add_mechanism_args(p)
    p.add_argument("--input", default=None)
    p.add_argument("--skip-oov", action="store_true")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("matrix", help="estimate the mechanism transition matrix")
    _add_mechanism_args(p)
    p.add_argument("--samples", type=int, required=True)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("stats", help="plausible-deniability statistics per word")
    _add_mechanism_args(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--words", nargs="*", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify-dp", help="empirical metric-DP check on a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_verify_dp)

    p = sub.add_parser("attack", help="Bayes inference attack accuracy")
    p.add_argument("--matrix", required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--prior", default="uniform", help="'uniform' or 'zipf:<s>'")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sensitivity", help="per-word local/smooth sensitivity TSV")
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("pipeline", help="run a localize-amplify-curate simulation")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ingest", help="validate embeddings and write a binary cache")
    p.set_defaults(func=cmd_ingest)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidWordIdError, PrivtextError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
