"""Command-line interface.

Subcommands ``sblm``, ``sbqr`` and ``sbgp`` fit a model to a CSV file and
write a draw archive plus a summary CSV; ``simulate`` runs the simulation
harness; ``transform-export`` writes transformation knots from an archive.

Exit status: 0 on success, 2 for input errors, 3 for numerical failures,
4 for invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .archive import DrawArchive, config_hash
from .data import ingest_csv
from .errors import ConfigError, InputError, NumericalError, SemiBayesError
from .simlab import METHODS, SimDesign, StudyConfig, hpd_interval, reports_to_csv, run_study, summary_json

OUTPUT_ENV = "SEMIBAYES_OUTPUT_DIR"
DESIGNS = ("beta", "step", "boxcox", "identity", "hetero")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semibayes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=_seed, default=None, help="master seed (random if omitted)")
        sp.add_argument("--output-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
        sp.add_argument("--draws", type=_positive_int, default=1000, help="number of retained draws")
        sp.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)
        sp.add_argument("--quiet", action="store_true")

    def model_data(sp):
        sp.add_argument("--data", required=True, help="CSV file with a header row")
        sp.add_argument("--response", required=True, help="response column")
        sp.add_argument("--covariates", default=None, help="comma-separated covariate columns (default: all others)")
        sp.add_argument("--query", default=None, help="CSV of query points with the covariate columns")
        sp.add_argument("--extension", choices=("clamp", "linear"), default="clamp")

    sp = sub.add_parser("sblm", help="semiparametric Bayesian linear regression")
    common(sp)
    model_data(sp)
    sp.add_argument("--psi", type=float, default=None, help="g-prior scale (default n)")
    sp.add_argument("--a-sigma", type=float, default=0.001)
    sp.add_argument("--b-sigma", type=float, default=0.001)
    sp.add_argument("--approx", choices=("prior", "laplace"), default="laplace")
    sp.add_argument("--sir", action="store_true", help="importance-resample the draws")
    sp.add_argument("--sir-keep", type=_positive_int, default=None)
    sp.add_argument("--prior-draws", type=_positive_int, default=1000)

    sp = sub.add_parser("sbqr", help="semiparametric Bayesian quantile regression")
    common(sp)
    model_data(sp)
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--s-xi", type=_positive_int, default=100)
    sp.add_argument("--burn-in", type=int, default=1000)
    sp.add_argument("--approx", choices=("prior", "plugin_qr"), default="prior")

    sp = sub.add_parser("sbgp", help="semiparametric Gaussian process regression")
    common(sp)
    model_data(sp)
    sp.add_argument("--mode", choices=("fast", "sample_f"), default="fast")

    sp = sub.add_parser("simulate", help="simulation study")
    common(sp)
    sp.add_argument("--design", choices=DESIGNS, required=True)
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--method", action="append", required=True, help=f"one of {', '.join(METHODS)}; repeatable")
    sp.add_argument("--replicates", type=_positive_int, default=20)
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--level", type=float, default=0.9)
    sp.add_argument("--error-sd", type=float, default=1.0)
    sp.add_argument("--burn-in", type=int, default=1000)

    sp = sub.add_parser("transform-export", help="write transformation knots from an archive as CSV")
    sp.add_argument("--archive", required=True)
    sp.add_argument("--index", type=int, default=None, help="single draw to export (default: all, long format)")
    sp.add_argument("--out", default=None, help="output file (default stdout)")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def output_dir(arg: Optional[str]) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load(args):
    covs = None if args.covariates is None else [c.strip() for c in args.covariates.split(",") if c.strip()]
    ds = ingest_csv(args.data, args.response, covs)
    Xq = None
    if args.query:
        qpath = Path(args.query)
        try:
            rows = list(csv.reader(qpath.read_text(encoding="utf-8").splitlines()))
        except OSError as exc:
            raise InputError(f"cannot read {qpath}: {exc}") from exc
        header = [h.strip() for h in rows[0]]
        missing = [c for c in ds.covariate_names if c not in header]
        if missing:
            raise InputError(f"query file lacks columns {missing}")
        idx = [header.index(c) for c in ds.covariate_names]
        try:
            Xq = np.array([[float(r[j]) for j in idx] for r in rows[1:] if r], dtype=float).reshape(-1, ds.d)
        except ValueError as exc:
            raise InputError(f"non-numeric value in {qpath}: {exc}") from exc
    return ds, Xq


def _base_config(args, ds) -> dict:
    return {
        "data_sha256": _file_digest(args.data),
        "response": ds.response_name,
        "covariates": list(ds.covariate_names),
        "query_sha256": _file_digest(args.query) if args.query else None,
        "draws": args.draws,
        "extension": args.extension,
    }


def _summary_rows(names: Sequence[str], draws: np.ndarray, kind: str) -> List[list]:
    lo, hi = hpd_interval(draws, 0.95)
    mean = draws.mean(axis=0)
    return [[kind, nm, repr(float(m)), repr(float(a)), repr(float(b))] for nm, m, a, b in zip(names, mean, lo, hi)]


def _predictive_rows(pred: np.ndarray) -> List[list]:
    q = np.quantile(pred, [0.05, 0.5, 0.95], axis=0)
    mean = pred.mean(axis=0)
    return [["predictive", f"query_{i}", repr(float(mean[i])), repr(float(q[0, i])), repr(float(q[2, i])), repr(float(q[1, i]))]
            for i in range(pred.shape[1])]


def _write_summary(path: Path, rows: List[list]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "name", "mean", "lower", "upper", "median"])
    for r in rows:
        w.writerow(r + [""] * (6 - len(r)))
    path.write_text(buf.getvalue(), encoding="utf-8")


def _banner(args, model: str, cfg: dict, quiet: bool):
    if not quiet:
        print(f"semibayes {model} seed={args.seed} config={config_hash(cfg)[:16]}")


def _resolve_seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % 2**64)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def run_sblm(args) -> int:
    from .sblm import SblmConfig, sblm_run

    ds, Xq = _load(args)
    cfg = SblmConfig(psi=args.psi, a_sigma=args.a_sigma, b_sigma=args.b_sigma, approx_source=args.approx,
                     num_draws=args.draws, sir_enabled=args.sir, sir_keep=args.sir_keep,
                     num_prior_draws=args.prior_draws, extension=args.extension, workers=args.workers)
    conf = {**_base_config(args, ds), "model": "sblm", "psi": args.psi, "a_sigma": args.a_sigma,
            "b_sigma": args.b_sigma, "approx": args.approx, "sir": args.sir, "sir_keep": args.sir_keep,
            "prior_draws": args.prior_draws}
    _banner(args, "sblm", conf, args.quiet)
    d = sblm_run(ds, cfg, Xq, seed=args.seed)
    arc = DrawArchive("sblm", args.seed, conf, n=ds.n, d=ds.d)
    arc.arrays.update(theta=d.theta_draws, sigma=d.sigma_draws, predictive=d.predictive_draws)
    if d.log_imp_weights is not None:
        arc.arrays.update(log_weights=d.log_imp_weights, sir_indices=d.sir.indices)
    arc.set_transforms(d.g_draws)
    names = ["intercept"] + list(ds.covariate_names)
    rows = _summary_rows(names, d.theta_draws, "theta") + _summary_rows(["sigma"], d.sigma_draws[:, None], "sigma")
    rows += _predictive_rows(d.predictive_draws)
    if d.sir is not None:
        rows.append(["sir", "ess", repr(d.sir.ess), "", ""])
    return _finish(args, "sblm", arc, rows)


def run_sbqr(args) -> int:
    from .sbqr import SbqrConfig, sbqr_run

    ds, Xq = _load(args)
    cfg = SbqrConfig(tau=args.tau, S_xi=args.s_xi, num_draws=args.draws, burn_in=args.burn_in,
                     approx_source=args.approx, extension=args.extension)
    conf = {**_base_config(args, ds), "model": "sbqr", "tau": args.tau, "s_xi": args.s_xi,
            "burn_in": args.burn_in, "approx": args.approx}
    _banner(args, "sbqr", conf, args.quiet)
    d = sbqr_run(ds, cfg, Xq, seed=args.seed)
    arc = DrawArchive("sbqr", args.seed, conf, n=ds.n, d=ds.d)
    arc.arrays.update(theta=d.theta_draws, predictive=d.predictive_draws, quantile=d.quantile_estimates)
    arc.set_transforms(d.g_draws)
    names = ["intercept"] + list(ds.covariate_names)
    rows = _summary_rows(names, d.theta_draws, "theta") + _predictive_rows(d.predictive_draws)
    rows += [["quantile", f"query_{i}", repr(float(q))] for i, q in enumerate(d.quantile_estimates)]
    return _finish(args, "sbqr", arc, rows)


def run_sbgp(args) -> int:
    from .sbgp import SbgpConfig, sbgp_run

    ds, Xq = _load(args)
    cfg = SbgpConfig(num_draws=args.draws, mode=args.mode, extension=args.extension)
    conf = {**_base_config(args, ds), "model": "sbgp", "mode": args.mode}
    _banner(args, "sbgp", conf, args.quiet)
    d = sbgp_run(ds, Xq, cfg, seed=args.seed)
    arc = DrawArchive("sbgp", args.seed, conf, n=ds.n, d=ds.d)
    arc.arrays.update(predictive=d.predictive_draws)
    if d.f_draws is not None:
        arc.arrays["f"] = d.f_draws
    arc.set_transforms(d.g_draws)
    pr = d.fit.params
    rows = [["gp", k, repr(float(v))] for k, v in
            (("variance_ratio", pr.variance), ("range", pr.range), ("smoothness", pr.smoothness),
             ("mean_const", pr.mean_const), ("noise_scale", pr.noise_scale))]
    rows += _predictive_rows(d.predictive_draws)
    return _finish(args, "sbgp", arc, rows)


def _finish(args, model, arc: DrawArchive, rows) -> int:
    out = output_dir(args.output_dir)
    arc.write(out / f"{model}_draws.sbd")
    _write_summary(out / f"{model}_summary.csv", rows)
    if not args.quiet:
        print(f"wrote {out / f'{model}_draws.sbd'} and {out / f'{model}_summary.csv'}")
    return 0


def run_simulate(args) -> int:
    methods = []
    for m in args.method:
        methods.extend(x.strip() for x in m.split(",") if x.strip())
    design = SimDesign.named(args.design, args.n, args.p, error_sd=args.error_sd, seed=args.seed)
    study = StudyConfig(num_draws=args.draws, tau=args.tau, level=args.level, burn_in=args.burn_in)
    conf = {"model": "simulate", "design": args.design, "n": args.n, "p": args.p, "methods": methods,
            "replicates": args.replicates, "tau": args.tau, "level": args.level, "error_sd": args.error_sd,
            "draws": args.draws, "burn_in": args.burn_in}
    _banner(args, "simulate", conf, args.quiet)
    rows = run_study(design, methods, args.replicates, study, args.seed, workers=min(args.workers, args.replicates))
    out = output_dir(args.output_dir)
    stem = f"sim_{args.design}_{args.n}_{args.p}"
    (out / f"{stem}_metrics.csv").write_text(reports_to_csv(rows), encoding="utf-8")
    (out / f"{stem}_summary.json").write_text(summary_json(rows), encoding="utf-8")
    if not args.quiet:
        print(f"wrote {out / f'{stem}_metrics.csv'} and {out / f'{stem}_summary.json'}")
    return 0


def run_transform_export(args) -> int:
    arc = DrawArchive.read(args.archive)
    gs = arc.transforms()
    if not gs:
        raise InputError("archive holds no transformation draws")
    if args.index is not None:
        if not 0 <= args.index < len(gs):
            raise ConfigError(f"index must lie in [0, {len(gs)})")
        text = gs[args.index].to_csv()
    else:
        lines = [f"# extension={gs[0].extension}", "draw,knot_t,knot_g"]
        for s, g in enumerate(gs):
            lines += [f"{s},{float(a)!r},{float(b)!r}" for a, b in zip(g.knots_t, g.knots_g)]
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "sblm": run_sblm,
    "sbqr": run_sbqr,
    "sbgp": run_sbgp,
    "simulate": run_simulate,
    "transform-export": run_transform_export,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "seed"):
            _resolve_seed(args)
        return COMMANDS[args.command](args)
    except SemiBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
