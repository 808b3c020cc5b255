"""Command-line front end: ``trnet {synth,gradcheck,tucker,tables}``.

Exit codes: 0 success, 1 check failure or divergence, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from trnet import io
from trnet.experiment import SynthExperiment, effective_weight, results_csv, run_synth
from trnet.gradcheck import GROUPS, gradcheck_suite
from trnet.params import regenerate_tables
from trnet.training import SyntheticSpec, TrainingDiverged, config_dict
from trnet.tucker import hooi, partial_tucker, tucker_reconstruct

log = logging.getLogger("trnet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class CommandOutcome:
    exit_code: int
    summary: str
    artifacts: list = field(default_factory=list)


def _ints(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_synth(args) -> CommandOutcome:
    true_ranks = args.true_rank or args.trl_rank or (1,) * (len(args.input_shape) + 1)
    try:
        data = SyntheticSpec(
            input_shape=args.input_shape, num_test=args.num_test, n_outputs=args.outputs,
            signal_std=args.signal_std, noise_std=args.noise_std, true_weight=args.true_weight,
            true_ranks=true_ranks, noisy_test=args.noisy_test, seed=args.seed,
        )
        exp = SynthExperiment(sizes=args.sizes, data=data, trl_ranks=args.trl_rank)
    except ValueError as e:
        raise UsageError(str(e))
    exp.trl = replace(exp.trl, epochs=args.epochs, batch_size=args.batch_size, l2_weight_decay=args.weight_decay,
                      use_batch_norm=args.batch_norm, normalize_factors_every_step=not args.no_normalize_factors,
                      **({"learning_rate": args.lr_trl} if args.lr_trl is not None else {}))
    exp.fc = replace(exp.fc, epochs=args.epochs, batch_size=args.batch_size, l2_weight_decay=args.weight_decay,
                     use_batch_norm=args.batch_norm,
                     **({"learning_rate": args.lr_fc} if args.lr_fc is not None else {}))
    try:
        results, w = run_synth(exp)
    except TrainingDiverged as e:
        return CommandOutcome(EXIT_FAIL, f"training diverged: {e}")
    out = _out_dir(args.out)
    written = []
    (out / "rmse_vs_size.csv").write_text(results_csv(results))
    written.append(out / "rmse_vs_size.csv")
    io.save(out / "true_weight.dtf", w)
    written.append(out / "true_weight.dtf")
    runs = []
    for r in results:
        for kind, model, rec in (("trl", r.trl_model, r.trl_record), ("fc", r.fc_model, r.fc_record)):
            path = out / f"weight_{kind}_n{r.size}.dtf"
            io.save(path, effective_weight(model, data.input_shape))
            written.append(path)
            runs.append({"size": r.size, "model": kind, **rec.to_dict()})
    io.write_json(out / "runs.json", {
        "data": config_dict(data), "trl_ranks": list(exp.trl_ranks),
        "trl_config": config_dict(exp.trl), "fc_config": config_dict(exp.fc), "runs": runs,
    })
    written.append(out / "runs.json")
    lines = ["size  rmse_trl  rmse_fc"] + [f"{r.size:>4}  {r.rmse_trl:8.4f}  {r.rmse_fc:7.4f}" for r in results]
    return CommandOutcome(EXIT_OK, "\n".join(lines), written)


def cmd_gradcheck(args) -> CommandOutcome:
    errors = gradcheck_suite(args.instances, seed=args.seed, max_dim=args.max_dim, flip=args.flip_sign)
    ok = all(e <= args.tol for e in errors.values())
    lines = [f"{g:<20} {e:.3e}  {'ok' if e <= args.tol else 'FAIL'}" for g, e in errors.items()]
    lines.append(f"{'PASS' if ok else 'FAIL'}: max relative error {max(errors.values()):.3e} (tol {args.tol:g})")
    written = []
    if args.out:
        path = _out_dir(args.out) / "gradcheck.json"
        io.write_json(path, {"seed": args.seed, "instances": args.instances, "tol": args.tol, "errors": errors})
        written.append(path)
    return CommandOutcome(EXIT_OK if ok else EXIT_FAIL, "\n".join(lines), written)


def cmd_tucker(args) -> CommandOutcome:
    try:
        x = io.load(args.input)
    except (OSError, io.DTFError) as e:
        raise UsageError(f"cannot read {args.input}: {e}")
    modes = args.modes if args.modes is not None else tuple(range(x.ndim))
    ranks = args.ranks if args.ranks is not None else tuple(x.shape[m] for m in modes)
    try:
        if set(modes) == set(range(x.ndim)) and list(modes) == sorted(modes):
            t, report = hooi(x, ranks, max_iter=args.max_iter, tol=args.tol)
        else:
            t, report = partial_tucker(x, modes, ranks, max_iter=args.max_iter, tol=args.tol, return_report=True)
    except ValueError as e:
        raise UsageError(str(e))
    out = _out_dir(args.out)
    parts = {"core": ("core", t.core)}
    parts.update({f"factor_{m}": ("factor", f) for m, f in zip(t.modes, t.factors)})
    io.save_bundle(out, parts, {"modes": list(t.modes), "input_shape": list(x.shape), "ranks": list(t.core.shape)})
    recon = tucker_reconstruct(t)
    io.save(out / "reconstruction.dtf", recon)
    io.write_json(out / "report.json", report.to_dict())
    err = float(np.linalg.norm(x - recon) / max(np.linalg.norm(x), np.finfo(float).tiny))
    written = [out / "manifest.json", out / "reconstruction.dtf", out / "report.json"]
    written += [out / f"{name}.dtf" for name in parts]
    return CommandOutcome(EXIT_OK, f"iterations {report.iterations}, final relative error {err:.3e}", written)


def _tables_text(rows):
    width = max(len(r["label"]) for r in rows)
    lines, table = [], None
    for r in rows:
        if r["table"] != table:
            table = r["table"]
            lines += (["" ] if lines else []) + [f"[{table}]", f"{'config':<{width}}  {'params':>11}  {'ref':>11}  savings%  printed"]
        printed = "-" if r["printed"] is None else r["printed"]
        flag = "" if r["match"] is None else ("  ok" if r["match"] else "  MISMATCH")
        lines.append(f"{r['label']:<{width}}  {r['n_model']:>11,}  {r['n_reference']:>11,}  "
                     f"{r['savings_percent']:>8}  {printed}{flag}")
    return "\n".join(lines)


def _tables_csv(rows):
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_tables(args) -> CommandOutcome:
    rows = regenerate_tables()
    if args.preset:
        known = {r["preset"] for r in rows}
        unknown = [p for p in args.preset if p not in known]
        if unknown:
            raise UsageError(f"unknown preset(s): {', '.join(unknown)}")
        rows = [r for r in rows if r["preset"] in args.preset]
    written = []
    if args.out:
        out = _out_dir(args.out)
        (out / "tables.csv").write_text(_tables_csv(rows))
        io.write_json(out / "tables.json", rows)
        written += [out / "tables.csv", out / "tables.json"]
    summary = json.dumps(rows, indent=2) if args.json else _tables_text(rows)
    code = EXIT_OK
    if args.verify:
        bad = [r for r in rows if r["match"] is False]
        checked = sum(r["match"] is not None for r in rows)
        if bad:
            code = EXIT_FAIL
            detail = "; ".join(f"{r['label']}: got {r['savings_percent']}, printed {r['printed']}" for r in bad)
            summary += f"\nverify: {len(bad)} of {checked} rows differ ({detail})"
        else:
            summary += f"\nverify: all {checked} rows match"
    return CommandOutcome(code, summary, written)


def build_parser():
    p = argparse.ArgumentParser(prog="trnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="TRL vs FC regression on synthetic data across training sizes")
    s.add_argument("--sizes", type=_ints, default=(50, 100, 200, 500))
    s.add_argument("--trl-rank", type=_ints, default=None, help="TRL ranks: one per input mode, then output rank")
    s.add_argument("--true-rank", type=_ints, default=None, help="ranks of the true weight (default: --trl-rank)")
    s.add_argument("--true-weight", choices=("lowrank", "dense"), default="lowrank")
    s.add_argument("--input-shape", type=_ints, default=(64, 64))
    s.add_argument("--outputs", type=int, default=1)
    s.add_argument("--num-test", type=int, default=5000)
    s.add_argument("--signal-std", type=float, default=float(np.sqrt(3.0)))
    s.add_argument("--noise-std", type=float, default=float(np.sqrt(3.0)))
    s.add_argument("--noisy-test", action="store_true")
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr-trl", type=float, default=None)
    s.add_argument("--lr-fc", type=float, default=None)
    s.add_argument("--weight-decay", type=float, default=0.05)
    s.add_argument("--batch-norm", action="store_true", help="batch normalisation before each model")
    s.add_argument("--no-normalize-factors", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out/synth")
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    g.add_argument("--instances", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-dim", type=int, default=6)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--flip-sign", choices=GROUPS, default=None, help="negate one analytic gradient (checker self-test)")
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gradcheck)

    t = sub.add_parser("tucker", help="Tucker-decompose a DTF1 tensor")
    t.add_argument("input")
    t.add_argument("--ranks", type=_ints, default=None, help="one rank per decomposed mode (default: full)")
    t.add_argument("--modes", type=_ints, default=None, help="modes to decompose (default: all)")
    t.add_argument("--max-iter", type=int, default=50)
    t.add_argument("--tol", type=float, default=1e-8)
    t.add_argument("--out", default="out/tucker")
    t.set_defaults(func=cmd_tucker)

    b = sub.add_parser("tables", help="regenerate the space-savings tables")
    b.add_argument("--verify", action="store_true", help="fail unless every printed value is reproduced")
    b.add_argument("--json", action="store_true")
    b.add_argument("--preset", action="append", default=None, help="restrict to the given preset(s)")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        outcome = args.func(args)
    except UsageError as e:
        print(f"trnet {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(outcome.summary)
    for path in outcome.artifacts:
        log.info("wrote %s", path)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
