"""Command-line interface: ``hte-vim simulate | analyze | rank | truths | synth``.

Exit codes: 0 success, 2 too many failed replicates, 64 usage or config
error, 65 data error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_DATA = 0, 2, 64, 65

log = logging.getLogger("hte_vim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _choices(text: str, allowed: dict, what: str) -> tuple:
    out = []
    for token in text.split(","):
        key = token.strip().lower()
        if not key:
            continue
        if key not in allowed:
            raise UsageError(f"unknown {what} {token!r}; choose from {', '.join(allowed)}")
        if allowed[key] not in out:
            out.append(allowed[key])
    if not out:
        raise UsageError(f"no {what} given")
    return tuple(out)


ESTIMAND_NAMES = {"vte": "VTE", "vima": "VIMa", "vimb": "VIMb"}
FAMILY_NAMES = {"ss": "SS", "ee": "EE", "tmle": "TMLE"}
STUB_NAMES = {"oracle": "oracle", "normal": "normal"}
META_NAMES = {"s": "S", "dr": "DR"}


def parse_subset(text: str, names) -> tuple:
    """Comma-separated covariate names or 1-based positions -> 0-based indices."""
    idx = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token in names:
            idx.append(list(names).index(token))
        elif token.isdigit() and 1 <= int(token) <= len(names):
            idx.append(int(token) - 1)
        else:
            raise UsageError(f"unknown covariate {token!r} in --subset")
    if not idx:
        raise UsageError("empty --subset")
    return tuple(sorted(set(idx)))


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hte-vim", description="Treatment-effect heterogeneity: VTE and variable importance.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="run the simulation study")
    s.add_argument("--n-grid", default=None, help="comma-separated sample sizes (default 200,1000,5000)")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--estimands", default="vte,vima,vimb")
    s.add_argument("--families", default="ss,ee,tmle", help="ss,ee,tmle (oracle/normal stubs also accepted)")
    s.add_argument("--metalearner", default="s", help="s or dr")
    s.add_argument("--subset", default="1", help="covariate names or 1-based positions (default 1)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None, help="parallel replicates (default: all cores)")
    s.add_argument("--full-paper-grid", action="store_true", help="seven sample sizes up to 20000, 500 reps")
    s.add_argument("--null", action="store_true", help="use the no-effect variant of the design")
    s.add_argument("--max-fail", type=float, default=0.05, help="tolerated failed-replicate fraction")

    for name, helptext in (("analyze", "estimate for one covariate subset"), ("rank", "rank single covariates")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("--data", required=True)
        a.add_argument("--outcome", required=True)
        a.add_argument("--treatment", required=True)
        a.add_argument("--covariates", default=None, help="comma-separated (default: all other columns)")
        a.add_argument("--folds", type=int, default=10, help="cross-fitting folds")
        a.add_argument("--metalearner", default="s")
        a.add_argument("--seed", type=int, default=0)
        a.add_argument("--config", default=None)
        a.add_argument("--out", required=True)
        if name == "analyze":
            a.add_argument("--subset", required=True)
            a.add_argument("--families", default="tmle")
            a.add_argument("--estimands", default="vima")
        else:
            a.add_argument("--families", default="ee,tmle")
            a.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("truths", help="print the true parameter values of the simulation design")
    t.add_argument("--subset", default="1")
    t.add_argument("--mc-draws", type=int, default=0, help="also run a Monte Carlo check with this many draws")
    t.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("synth", help="write a synthetic trial CSV with the ACTG 175 covariate layout")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=2139)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--effect", choices=("default", "null", "constant"), default="default")
    return p


def cmd_simulate(args) -> int:
    from . import config as cfgmod
    from .sim import FULL_N_GRID, FULL_REPS, run_replicates, write_outputs

    cfg = cfgmod.load_config(args.config) if args.config else {}
    n_grid = _int_list(args.n_grid) if args.n_grid else None
    reps = args.reps
    if args.full_paper_grid:
        n_grid = n_grid or FULL_N_GRID
        reps = reps or FULL_REPS
    families = _choices(args.families, {**FAMILY_NAMES, **STUB_NAMES}, "family")
    config = cfgmod.sim_config(
        cfg,
        n_grid=n_grid,
        reps=reps,
        estimands=_choices(args.estimands, ESTIMAND_NAMES, "estimand"),
        families=families,
        metalearner=_choices(args.metalearner, META_NAMES, "metalearner")[0],
        subset=parse_subset(args.subset, ("W1", "W2")),
        seed=args.seed,
        null=True if args.null else None,
    )
    workers = args.workers or os.cpu_count() or 1
    start = time.time()

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            log.info("%d/%d replicates (%.0fs)", done, total, time.time() - start)

    metrics, records = run_replicates(config, workers, progress)
    paths = write_outputs(config, metrics, records, args.out)
    n_fail = sum(1 for r in records if r["failed"])
    frac = n_fail / max(1, len(records))
    print(f"wrote {paths['metrics']} ({len(metrics)} rows) and {paths['replicates']}")
    if n_fail:
        print(f"{n_fail} of {len(records)} estimates failed ({frac:.1%})", file=sys.stderr)
    return EXIT_PARTIAL if frac > args.max_fail else EXIT_OK


def _load_data(args):
    from .analyze import ingest_with_summary

    covs = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else None
    ds, summary = ingest_with_summary(args.data, args.outcome, args.treatment, covs)
    if summary.rows_rejected:
        print(f"rejected {summary.rows_rejected} row(s) with missing values", file=sys.stderr)
    return ds


def _pipeline(args):
    from . import config as cfgmod

    cfg = cfgmod.load_config(args.config) if args.config else {}
    meta = _choices(args.metalearner, META_NAMES, "metalearner")[0]
    return cfgmod.pipeline_config(cfg, seed=args.seed, metalearner=meta)


def cmd_analyze(args) -> int:
    from dataclasses import replace

    from .analyze import write_reports_csv
    from .model import SubsetSpec
    from .pipeline import estimate

    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    families = _choices(args.families, FAMILY_NAMES, "family")
    estimands = _choices(args.estimands, ESTIMAND_NAMES, "estimand")
    config = _pipeline(args)
    ds = _load_data(args)
    subset = SubsetSpec(parse_subset(args.subset, ds.names))
    reports = estimate(ds, subset, replace(config, crossfit=args.folds), estimands, families)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports_csv(reports, out / "estimates.csv")
    for r in reports:
        print(f"{r.estimand:5s} {r.family:5s} {r.subset}: {r.psi:.6g} [{r.ci_lo:.6g}, {r.ci_hi:.6g}]")
    return EXIT_OK


def cmd_rank(args) -> int:
    from .analyze import rank_markdown, rank_vims, write_rank_csv

    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    families = _choices(args.families, FAMILY_NAMES, "family")
    config = _pipeline(args)
    ds = _load_data(args)
    rows = rank_vims(ds, config, families, args.folds, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rank_csv(rows, out / "ranking.csv")
    md = rank_markdown(rows)
    (out / "ranking.md").write_text(md, encoding="utf-8")
    print(md, end="")
    failed = {r.covariate for r in rows if r.error}
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_truths(args) -> int:
    from .model import SubsetSpec
    from .sim import truths, truths_monte_carlo

    subset = SubsetSpec(parse_subset(args.subset, ("W1", "W2")))
    t = truths(subset)
    print(f"VTE  {t.psi1:.7f}\nVIMa {t.psi2:.7f}\nVIMb {t.psi3:.7f}")
    if args.mc_draws:
        est, se = truths_monte_carlo(subset, args.mc_draws, args.seed)
        for name, a, b, e in zip(("VTE", "VIMa", "VIMb"), (t.psi1, t.psi2, t.psi3), (est.psi1, est.psi2, est.psi3),
                                 (se.psi1, se.psi2, se.psi3)):
            print(f"{name:4s} monte carlo {b:.7f} (se {e:.2g}, z = {(b - a) / e:+.2f})")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .analyze import write_actg_like_csv

    write_actg_like_csv(args.out, args.n, args.seed, args.effect)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "rank": cmd_rank, "truths": cmd_truths, "synth": cmd_synth}


def main(argv=None) -> int:
    from .config import ConfigError
    from .model import DataError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"hte-vim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"hte-vim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
