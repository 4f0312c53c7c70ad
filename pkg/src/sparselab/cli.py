"""Command-line entry point.

Every subcommand writes its outputs plus a run manifest (subcommand, full
parameters, seed, tool version, output paths) into the --out directory,
so a run can be reproduced from its manifest alone.

Exit codes: 0 success, 1 verification failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .construction import (
    GridFunction,
    approximation_budget,
    build_config,
    end_to_end,
    verify_contextual_map,
    verify_soft_contextual_map,
)
from .errors import ConfigError, IntegrityError, ParameterError, ShapeError
from .patterns import (
    HeadConfig,
    SparsityPattern,
    apply_head_config,
    connection_count,
    dense,
    fixed,
    load_pattern,
    random_pattern,
    save_pattern,
    sparsity_level,
    star,
    strided,
    window_global,
)
from .probmaps import MapKind, ProbabilityMapSpec, apply_columns, check_assumption2
from .training import TrainConfig, metrics_to_csv, save_checkpoint, train
from .verify import REFUTED, UNKNOWN, assumption_report, save_report

__all__ = ["main", "parse_pattern_spec"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=1, sort_keys=True)
        f.write("\n")


def _write_manifest(out_dir: Path, subcommand: str, params: dict,
                    seed, outputs: list[str]) -> None:
    _write_json(out_dir / "manifest.json", {
        "schema_version": 1,
        "tool_version": __version__,
        "subcommand": subcommand,
        "parameters": params,
        "seed": seed,
        "outputs": outputs,
    })


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _args_dict(args) -> dict:
    """Flag values only; parser plumbing (the bound handler and the
    subcommand name, recorded separately) stays out of the manifest."""
    return {k: v for k, v in vars(args).items() if k not in ("fn", "command")}


def parse_pattern_spec(spec: str, n: int) -> SparsityPattern:
    """Build a pattern from a compact spec string:
    dense | strided:W | fixed:W | star:W | window_global:W:G |
    random:SPARSITY:SEED."""
    parts = spec.split(":")
    kind, params = parts[0], parts[1:]
    try:
        if kind == "dense" and not params:
            return dense(n)
        if kind == "strided" and len(params) == 1:
            return strided(n, int(params[0]))
        if kind == "fixed" and len(params) == 1:
            return fixed(n, int(params[0]))
        if kind == "star" and len(params) == 1:
            return star(n, int(params[0]))
        if kind == "window_global" and len(params) == 2:
            return window_global(n, int(params[0]), int(params[1]))
        if kind == "random" and len(params) == 2:
            return random_pattern(n, float(params[0]), int(params[1]))
    except ValueError as err:
        raise ParameterError(f"bad pattern spec {spec!r}: {err}") from err
    raise ParameterError(f"unrecognized pattern spec {spec!r}")


def _build_named_pattern(args) -> SparsityPattern:
    if args.kind == "dense":
        return dense(args.n)
    if args.kind == "strided":
        return strided(args.n, args.w)
    if args.kind == "fixed":
        return fixed(args.n, args.w)
    if args.kind == "star":
        return star(args.n, args.w)
    if args.kind == "window_global":
        return window_global(args.n, args.w, args.g)
    if args.kind == "random":
        if args.seed is None:
            raise ParameterError("--kind random requires --seed")
        return random_pattern(args.n, args.sparsity, args.seed)
    raise ParameterError(f"unknown pattern kind {args.kind!r}")


def _cmd_pattern(args) -> int:
    out = _out_dir(args)
    pat = _build_named_pattern(args)
    config = HeadConfig(args.config)
    resolved = apply_head_config(pat, config)
    saved = resolved if config is HeadConfig.UNION else pat
    # Sequential and multihead deployments keep the family cycle, so their
    # sparsity is the per-family mean; union merges before measuring.
    stats_pat = resolved if config is HeadConfig.UNION else pat
    save_pattern(saved, out / "pattern.json")
    with open(out / "stats.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["kind", "n", "w", "g", "config", "p", "sparsity",
                         "connections", "connections_per_position"])
        conns = connection_count(stats_pat)
        writer.writerow([
            args.kind, args.n, args.w, args.g, args.config, stats_pat.p,
            repr(sparsity_level(stats_pat)), conns, repr(conns / args.n),
        ])
    _write_manifest(out, "pattern", _args_dict(args) | {"out": str(out)},
                    args.seed, ["pattern.json", "stats.csv"])
    return 0


def _cmd_verify(args) -> int:
    out = _out_dir(args)
    pat = load_pattern(args.pattern)
    rep = assumption_report(pat, cap=args.cap, budget=args.budget)
    save_report(rep, out / "report.json")
    _write_manifest(out, "verify", _args_dict(args) | {"out": str(out)},
                    None, ["report.json"])
    if rep.gamma_status == UNKNOWN:
        print("warning: chain permutation search exhausted its budget; "
              "status unknown", file=sys.stderr)
    if not rep.self_inclusion or rep.coverage_s is None \
            or rep.gamma_status == REFUTED:
        return 1
    return 0


def _probmap_spec(args) -> ProbabilityMapSpec:
    return ProbabilityMapSpec(
        kind=MapKind(args.kind), k=args.k, lam=args.lam, alpha=args.alpha
    )


def _cmd_probmap(args) -> int:
    out = _out_dir(args)
    spec = _probmap_spec(args)
    if args.input is not None:
        rows = np.loadtxt(args.input, delimiter=",", ndmin=2)
    else:
        if args.seed is None:
            raise ParameterError("random input requires --seed")
        rng = np.random.default_rng(args.seed)
        rows = rng.normal(0.0, 1.0, size=(args.cols, args.n))
    probs = apply_columns(spec, rows.T).T
    np.savetxt(out / "probs.csv", probs, delimiter=",")
    _write_manifest(out, "probmap", _args_dict(args) | {"out": str(out)},
                    args.seed, ["probs.csv"])
    return 0


def _cmd_probmap_check(args) -> int:
    out = _out_dir(args)
    spec = _probmap_spec(args)
    res = check_assumption2(spec, args.zeta, args.eta, args.n,
                            trials=args.trials, seed=args.seed)
    _write_json(out / "check.json", res)
    _write_manifest(out, "probmap-check", _args_dict(args) | {"out": str(out)},
                    args.seed, ["check.json"])
    return 0 if res["passed"] else 1


def _parse_delta(text: str) -> int:
    """1/delta as an integer >= 2, or ParameterError."""
    try:
        delta = Fraction(text)
    except (ValueError, ZeroDivisionError) as err:
        raise ParameterError(f"bad delta {text!r}: {err}") from err
    if delta <= 0 or delta >= 1:
        raise ParameterError("delta must lie in (0, 1)")
    inv = 1 / delta
    if inv.denominator != 1:
        raise ParameterError(f"1/delta must be an integer, got {inv}")
    return int(inv)


def _cmd_construct(args) -> int:
    out = _out_dir(args)
    delta_inv = _parse_delta(args.delta)
    pat = parse_pattern_spec(args.pattern, args.n)
    cfg = build_config(pat, args.d, delta_inv)
    if args.fbar == "random":
        fbar = GridFunction.random(args.n, args.d, delta_inv, seed=args.seed)
    else:
        fbar = GridFunction.from_function(
            lambda x: np.zeros((args.d, args.n)), args.n, args.d, delta_inv
        )
    report = verify_contextual_map(cfg)
    e2e = end_to_end(cfg, fbar, points_per_cell=args.points, seed=args.seed)
    soft = None
    if args.mode == "soft":
        budget = approximation_budget(cfg, eps=args.eps, p_norm=args.p_norm)
        soft = verify_soft_contextual_map(cfg, budget)
        report = replace(report, soft_max_deviation=soft["max_deviation"])
    body = report.to_json_dict()
    body["end_to_end"] = "exact" if e2e["exact"] else "mismatch"
    body["end_to_end_detail"] = e2e
    if soft is not None:
        body["soft"] = soft
    _write_json(out / "report.json", body)
    _write_manifest(out, "construct", _args_dict(args) | {"out": str(out)},
                    args.seed, ["report.json"])
    ok = report.passed and e2e["exact"]
    if soft is not None:
        ok = ok and soft["bound_ok"] and soft["ids_distinct"]
    return 0 if ok else 1


def _cmd_train(args) -> int:
    out = _out_dir(args)
    with open(args.config) as f:
        cfg_dict = json.load(f)
    if "seed" not in cfg_dict:
        raise ParameterError("train config must set an explicit seed")
    pat_spec = cfg_dict.pop("pattern")
    n = int(cfg_dict.get("n", 32))
    if isinstance(pat_spec, str):
        pattern = parse_pattern_spec(pat_spec, n)
    else:
        pattern = parse_pattern_spec(
            ":".join(str(pat_spec[key]) for key in ("kind", "w", "g")
                     if key in pat_spec), n
        )
    head = HeadConfig(cfg_dict.pop("head_config", "union"))
    tc = TrainConfig(pattern=pattern, head_config=head, **cfg_dict)
    params, trace = train(tc)
    metrics_to_csv(trace, out / "metrics.csv")
    save_checkpoint(out / "checkpoint.npz", params)
    _write_manifest(out, "train",
                    {"config": str(args.config), "resolved": cfg_dict,
                     "pattern": pat_spec, "out": str(out)},
                    cfg_dict.get("seed"), ["metrics.csv", "checkpoint.npz"])
    final = trace[-1]
    print(f"final step {final['step']}: loss {final['loss']:.6f}, "
          f"masked accuracy {final['masked_accuracy']:.4f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sparselab",
        description="Sparse-attention patterns, verification, constructions, "
                    "and micro-scale training with reproducible file outputs.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pattern", help="generate a pattern and its stats")
    p.add_argument("--kind", required=True,
                   choices=["strided", "fixed", "star", "window_global",
                            "random", "dense"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--w", type=int, default=1)
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--sparsity", type=float, default=0.9,
                   help="target sparsity for --kind random")
    p.add_argument("--config", default="sequential",
                   choices=["sequential", "union", "multihead"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_pattern)

    p = sub.add_parser("verify", help="check the attention-structure "
                                      "assumptions on a pattern file")
    p.add_argument("--pattern", required=True)
    p.add_argument("--cap", type=int, default=None,
                   help="max coverage depth to try (default 2n)")
    p.add_argument("--budget", type=int, default=200_000,
                   help="node budget for the chain-permutation search")
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("probmap", help="apply a probability map to score "
                                       "vectors")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in MapKind])
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--input", default=None,
                   help="CSV of score vectors, one per row")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_probmap)

    p = sub.add_parser("probmap-check", help="empirical concentration check "
                                             "for a probability map")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in MapKind])
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--zeta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_probmap_check)

    p = sub.add_parser("construct", help="build and verify a memorization "
                                         "construction on the delta-grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--delta", required=True,
                   help="grid resolution, e.g. 0.5 or 1/3")
    p.add_argument("--pattern", required=True,
                   help="pattern spec, e.g. dense or strided:1")
    p.add_argument("--mode", default="exact", choices=["exact", "soft"])
    p.add_argument("--fbar", default="random", choices=["random", "zero"])
    p.add_argument("--points", type=int, default=10,
                   help="random interior points per cell for the "
                        "end-to-end check")
    p.add_argument("--eps", type=float, default=1.0,
                   help="soft-mode output tolerance")
    p.add_argument("--p-norm", type=float, default=1.0, dest="p_norm")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_construct)

    p = sub.add_parser("train", help="train a micro model on the copying "
                                     "task from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_train)

    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterError, ConfigError, ShapeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as err:
        print(f"error: {err!r}", file=sys.stderr)
        return 2
    except IntegrityError as err:
        print(f"integrity failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
