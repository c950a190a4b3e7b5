"""Command-line entry point: ``horen {bench,sweep,verify,codebook,stress}``.

Settings resolve in three layers: built-in defaults, then a flat TOML file
given by ``--config``, then explicit flags. Output files go to ``--out`` or
``$HOREN_OUT_DIR`` (default: the working directory), which must already exist.

Exit codes: 0 success, 1 bad configuration / IO / unreadable codebook,
2 a checked property was violated.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .adaptor import AdaptorConfig, EditTarget
from .bench import SWEEP_AXES, StreamConfig, generate_stream, run_lifelong, scaling_stress, sweep
from .bench.reports import metrics_csv, scaling_csv, scaling_dict, sweep_csv, to_json
from .bench.routers import ROUTER_KINDS, make_router
from .codebook import Codebook, apply_edit, load, save
from .errors import FormatError, HorenError, InvalidConfig, NonFiniteLoss, ResourceBudgetExceeded
from .hopfield import HopfieldParams
from .theory import run_verification

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2

DEFAULTS = {
    "seed": 0,
    "dim": 64,
    "edits": 1000,
    "beta": 20.0,
    "gamma": 0.1,
    "steps": 1,
    "epsilon": 1e-4,
    "threshold": 0.85,
    "router": "horen",
    "paraphrase_angle": 0.15,
    "locality_angle": None,
    "hard_locality": False,
    "jitter": 0.0,
    "reassert_fraction": 0.0,
    "conflict_fraction": 0.0,
    "checkpoints": None,
    "learning_rate": 0.1,
    "adaptor_steps": 50,
    "loss_threshold": 1e-2,
    "patience": 3,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for property violations here.
    def error(self, message):
        raise UsageError(message)


def _csv_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", type=Path, help="flat TOML file with any of the settings below")
    p.add_argument("--out", type=Path, help="output directory (default $HOREN_OUT_DIR or .)")
    p.add_argument("--seed", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--edits", type=int, help="stream length")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--steps", type=int, help="damped refinement steps M")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--threshold", type=float, help="cosine match threshold c")
    p.add_argument("--router", choices=ROUTER_KINDS)
    p.add_argument("--paraphrase-angle", type=float)
    p.add_argument("--locality-angle", type=float)
    p.add_argument("--hard-locality", action="store_const", const=True)
    p.add_argument("--jitter", type=float, help="raw-query magnitude jitter")
    p.add_argument("--reassert-fraction", type=float)
    p.add_argument("--conflict-fraction", type=float)
    p.add_argument("--checkpoints", type=_csv_ints, help="comma-separated edit counts")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--adaptor-steps", type=int)
    p.add_argument("--loss-threshold", type=float)
    p.add_argument("--patience", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="horen", description="Normalized Hopfield codebook editor and benchmark.")
    parser.add_argument("--version", action="version", version=f"horen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    sub.add_parser("bench", parents=[common], help="run one lifelong-editing stream")

    sp = sub.add_parser("sweep", parents=[common], help="sweep one hyperparameter")
    sp.add_argument("--axis", required=True, help=f"one of: {', '.join(SWEEP_AXES)}")
    sp.add_argument("--values", required=True, type=_csv_floats, help="comma-separated values")

    vp = sub.add_parser("verify", parents=[common], help="check the refinement dynamics properties")
    vp.add_argument("--instances", type=int, default=200)
    vp.add_argument("--inject-bug", action="store_true", help="use a naive softmax at beta=1e6")

    cp = sub.add_parser("codebook", help="save, load or inspect a codebook file")
    csub = cp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action, text in (("save", "build from a stream and save"), ("load", "load and route probe queries"),
                         ("info", "print size, labels and edit range")):
        a = csub.add_parser(action, parents=[common], help=text)
        a.add_argument("path", type=Path)
        a.add_argument("--expected-dim", type=int)
        a.add_argument("--probes", type=int, default=100)

    st = sub.add_parser("stress", parents=[common], help="long-stream stability run")
    st.add_argument("--time-ceiling", type=float, default=1800.0, help="seconds")
    st.add_argument("--latency-queries", type=int, default=200)
    return parser


# The stress run defaults to its own long stream.
VERB_DEFAULTS = {"stress": {"edits": 50_000}}


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge defaults, the TOML file and explicit flags, in that order."""
    settings = {**DEFAULTS, **VERB_DEFAULTS.get(args.verb, {})}
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, "rb") as fh:
                from_file = tomllib.load(fh)
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {args.config}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfig(f"invalid TOML in {args.config}: {exc}") from exc
        unknown = sorted(set(from_file) - set(DEFAULTS))
        if unknown:
            raise InvalidConfig(f"unknown keys in {args.config}: {', '.join(unknown)}")
        settings.update(from_file)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    if settings["router"] not in ROUTER_KINDS:
        raise InvalidConfig(f"unknown router {settings['router']!r}; choose from {', '.join(ROUTER_KINDS)}")
    return settings


def _params(s: dict) -> HopfieldParams:
    return HopfieldParams(beta=float(s["beta"]), gamma=float(s["gamma"]), max_steps=int(s["steps"]),
                          epsilon=float(s["epsilon"]), c=float(s["threshold"]))


def _adaptor(s: dict) -> AdaptorConfig:
    return AdaptorConfig(learning_rate=float(s["learning_rate"]), max_steps=int(s["adaptor_steps"]),
                         loss_threshold=float(s["loss_threshold"]), patience=int(s["patience"]))


def _stream_config(s: dict) -> StreamConfig:
    return StreamConfig(
        n_edits=int(s["edits"]), dim=int(s["dim"]), paraphrase_angle=float(s["paraphrase_angle"]),
        hard_locality=bool(s["hard_locality"]), locality_angle=s["locality_angle"], seed=int(s["seed"]),
        magnitude_jitter=float(s["jitter"]), reassert_fraction=float(s["reassert_fraction"]),
        conflict_fraction=float(s["conflict_fraction"]),
    )


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out or Path(os.environ.get("HOREN_OUT_DIR", "."))
    if not out.is_dir():
        raise InvalidConfig(f"output directory {out} does not exist")
    return out


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise InvalidConfig(f"cannot write {path}: {exc.strerror}") from exc


def _manifest(out: Path, verb: str, settings: dict, **extra) -> None:
    _write(out / "manifest.json", to_json({"verb": verb, "version": __version__, "seed": settings["seed"],
                                           "config": settings, **extra}))


def cmd_bench(args, s: dict) -> int:
    out = _out_dir(args)
    report = run_lifelong(generate_stream(_stream_config(s)), s["router"], _params(s), _adaptor(s),
                          s["checkpoints"])
    _write(out / "metrics.json", to_json(report.to_dict()))
    _write(out / "metrics.csv", metrics_csv(report))
    _manifest(out, "bench", s)
    print(f"{report.router}: Rel={report.reliability:.4f} Gen={report.generalization:.4f} "
          f"Loc={report.locality:.4f} OP={report.op:.4f} C={report.per_checkpoint[-1].codebook_size}")
    return EXIT_OK


def cmd_sweep(args, s: dict) -> int:
    if args.axis not in SWEEP_AXES:
        raise InvalidConfig(f"unknown sweep axis {args.axis!r}; valid axes: {', '.join(SWEEP_AXES)}")
    out = _out_dir(args)
    report = sweep(_stream_config(s), args.axis, args.values, s["router"], _params(s), _adaptor(s))
    _write(out / "sweep.json", to_json(report.to_dict()))
    _write(out / "sweep.csv", sweep_csv(report))
    _manifest(out, "sweep", s, axis=args.axis, values=args.values)
    for r in report.rows:
        print(f"{args.axis}={r.value:g}: Rel={r.reliability:.4f} Gen={r.generalization:.4f} "
              f"Loc={r.locality:.4f} OP={r.op:.4f} disp={r.mean_unrelated_displacement:.4f}")
    return EXIT_OK


def cmd_verify(args, s: dict) -> int:
    if args.instances < 1:
        raise InvalidConfig("--instances must be >= 1")
    results = run_verification(args.instances, int(s["seed"]), inject_bug=args.inject_bug)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def _decision_digest(book: Codebook, params: HopfieldParams, n: int, seed: int) -> tuple[str, float]:
    """Hash of routing decisions for ``n`` seeded probe queries, and the matched fraction."""
    router = make_router("horen")
    probes = np.random.default_rng(seed).standard_normal((n, book.dim))
    r = router.route_batch(book, probes, params)
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(r.best_index, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(r.matched, dtype=np.uint8).tobytes())
    return h.hexdigest()[:16], float(r.matched.mean())


def _print_info(book: Codebook) -> None:
    info = book.info()
    print(f"dim={info['dim']} size={info['size']} edits={info['n_edits']} unit_keys={info['unit_keys']}")
    print(f"created_at range: {info['created_at_range']}")
    hist = list(info["label_histogram"].items())
    shown = ", ".join(f"{k}:{v}" for k, v in hist[:20])
    print(f"labels ({len(hist)} distinct): {shown}{', ...' if len(hist) > 20 else ''}")


def cmd_codebook(args, s: dict) -> int:
    params = _params(s)
    if args.action == "save":
        stream = generate_stream(_stream_config(s))
        book = Codebook(stream.config.dim)
        cfg = _adaptor(s)
        for t in range(len(stream)):
            apply_edit(book, stream.edit_queries[t], EditTarget(stream.labels[t], stream.targets[t]), params, cfg)
        try:
            save(book, args.path)
        except OSError as exc:
            raise InvalidConfig(f"cannot write {args.path}: {exc.strerror}") from exc
        digest, frac = _decision_digest(book, params, args.probes, int(s["seed"]))
        print(f"saved {len(book)} entries to {args.path}")
        print(f"decision digest {digest} (matched {frac:.3f} of {args.probes} probes)")
        return EXIT_OK
    try:
        book = load(args.path, args.expected_dim)
    except OSError as exc:
        raise InvalidConfig(f"cannot read {args.path}: {exc.strerror}") from exc
    except FormatError as exc:
        raise FormatError(f"{args.path}: {exc}") from exc
    _print_info(book)
    if args.action == "load":
        digest, frac = _decision_digest(book, params, args.probes, int(s["seed"]))
        print(f"decision digest {digest} (matched {frac:.3f} of {args.probes} probes)")
    return EXIT_OK


def cmd_stress(args, s: dict) -> int:
    out = _out_dir(args)
    edits = int(s["edits"])
    cps = s["checkpoints"] or [cp for cp in (1_000, 10_000, 20_000, 50_000) if cp <= edits] or [edits]
    report = scaling_stress(d=int(s["dim"]), max_edits=edits, checkpoints=cps,
                            paraphrase_angle=float(s["paraphrase_angle"]), c=float(s["threshold"]),
                            seed=int(s["seed"]), params=_params(s), adaptor_cfg=_adaptor(s),
                            time_ceiling_s=args.time_ceiling, latency_queries=args.latency_queries)
    _write(out / "scaling.json", to_json(scaling_dict(report)))
    _write(out / "scaling.csv", scaling_csv(report))
    _manifest(out, "stress", s)
    for r in report.rows:
        m = r.metrics
        print(f"{m.n_edits:>6} edits: Rel={m.reliability:.4f} Gen={m.generalization:.4f} Loc={m.locality:.4f} "
              f"C={m.codebook_size} params={r.parameter_count} t={r.elapsed_s:.1f}s")
    print(f"latency ratio full/half = {report.latency_ratio:.3f}; "
          f"memory max deviation from linear = {report.memory_max_deviation:.2e}")
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "sweep": cmd_sweep, "verify": cmd_verify, "codebook": cmd_codebook,
            "stress": cmd_stress}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"horen: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.verb](args, settings)
    except NonFiniteLoss as exc:
        print(f"horen: non-finite value: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except ResourceBudgetExceeded as exc:
        print(f"horen: resource budget exceeded: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HorenError, ValueError, TypeError) as exc:
        print(f"horen: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
