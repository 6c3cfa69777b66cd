"""Trial-data workflow: CSV ingestion and per-covariate VIMa ranking."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cate import fit_tau
from .model import DataError, Dataset, EstimateReport, SubsetSpec, check_estimable
from .nuisance import fit_nuisance
from .pipeline import PipelineConfig, estimate_from_fits

log = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none", "."}
TRUE_TOKENS = {"true", "t", "yes", "y"}
FALSE_TOKENS = {"false", "f", "no", "n"}

# Baseline covariates of the ACTG 175 trial as used for the ranking example.
ACTG175_SCHEMA = {
    "age": "age at baseline (years)",
    "wtkg": "weight at baseline (kg)",
    "karnof": "Karnofsky score (0-100)",
    "cd40": "CD4 count at baseline",
    "cd80": "CD8 count at baseline",
    "gender": "1 = male, 0 = female",
    "homo": "homosexual activity (1 = yes)",
    "race": "0 = white, 1 = non-white",
    "symptom": "symptomatic indicator (1 = yes)",
    "drugs": "history of IV drug use (1 = yes)",
    "hemo": "hemophilia (1 = yes)",
    "str2": "antiretroviral history (0 = naive, 1 = experienced)",
}
ACTG175_TREATMENT = "treat"
ACTG175_OUTCOME = "cd420"

RANK_COLUMNS = ("covariate", "family", "psi", "se", "ci_lo", "ci_hi", "iterations", "converged", "rank", "error")


@dataclass(frozen=True)
class IngestSummary:
    rows_read: int
    rows_rejected: int


def _parse(token: str, column: str, line: int) -> float:
    t = token.strip().lower()
    if t in MISSING:
        return math.nan
    if t in TRUE_TOKENS:
        return 1.0
    if t in FALSE_TOKENS:
        return 0.0
    try:
        return float(t)
    except ValueError:
        raise DataError(f"line {line}: column {column!r}: cannot parse {token!r}") from None


def ingest_with_summary(path, outcome_col, treatment_col, covariate_cols=None) -> tuple[Dataset, IngestSummary]:
    """Read a two-arm CSV into a :class:`Dataset`.

    Yes/no and true/false tokens become 1/0. Rows with a missing value in
    any used column are dropped and counted; anything else malformed raises
    :class:`DataError` naming the line.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        if covariate_cols is None:
            covariate_cols = [h for h in header if h not in (outcome_col, treatment_col)]
        wanted = [*covariate_cols, treatment_col, outcome_col]
        unknown = [c for c in wanted if c not in header]
        if unknown:
            raise DataError(f"{path}: unknown column(s) {', '.join(map(repr, unknown))}")
        if not covariate_cols:
            raise DataError(f"{path}: no covariate columns")
        idx = [header.index(c) for c in wanted]
        rows, rejected, read = [], 0, 0
        for record in reader:
            line = reader.line_num
            if not record or all(not f.strip() for f in record):
                continue
            read += 1
            if len(record) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, found {len(record)}")
            values = [_parse(record[i], header[i], line) for i in idx]
            if any(math.isnan(v) for v in values):
                rejected += 1
                continue
            if any(math.isinf(v) for v in values):
                raise DataError(f"line {line}: infinite value")
            a = values[-2]
            if a not in (0.0, 1.0):
                raise DataError(f"line {line}: treatment column {treatment_col!r} is not binary (value {a:g})")
            rows.append(values)
    if rejected:
        log.warning("%s: rejected %d row(s) with missing values", path, rejected)
    if not rows:
        raise DataError(f"{path}: no complete rows")
    arr = np.array(rows, dtype=float)
    ds = Dataset(arr[:, :-2], arr[:, -2], arr[:, -1], tuple(covariate_cols))
    return ds, IngestSummary(read, rejected)


def ingest(path, outcome_col, treatment_col, covariate_cols=None) -> Dataset:
    return ingest_with_summary(path, outcome_col, treatment_col, covariate_cols)[0]


def actg_like(n: int = 2139, seed: int = 0, effect: str = "default") -> tuple[Dataset, np.ndarray]:
    """Synthetic stand-in with the ACTG 175 covariate layout; returns (dataset, true tau).

    ``effect`` is ``"default"`` (effect modified mostly by cd40, then age),
    ``"null"`` (no effect) or ``"constant"``. Treatment is randomised 1:1.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, 175])))
    cols = {
        "age": np.clip(np.round(rng.normal(35, 9, n)), 12, 70),
        "wtkg": np.clip(rng.normal(75, 13, n), 31, 160),
        "karnof": rng.choice([70.0, 80.0, 90.0, 100.0], size=n, p=[0.02, 0.1, 0.4, 0.48]),
        "cd40": np.clip(rng.normal(350, 118, n), 0, 1200),
        "cd80": np.clip(rng.normal(987, 480, n), 40, 5000),
        "gender": rng.binomial(1, 0.83, n).astype(float),
        "homo": rng.binomial(1, 0.66, n).astype(float),
        "race": rng.binomial(1, 0.29, n).astype(float),
        "symptom": rng.binomial(1, 0.17, n).astype(float),
        "drugs": rng.binomial(1, 0.13, n).astype(float),
        "hemo": rng.binomial(1, 0.08, n).astype(float),
        "str2": rng.binomial(1, 0.59, n).astype(float),
    }
    W = np.column_stack([cols[k] for k in ACTG175_SCHEMA])
    A = rng.binomial(1, 0.5, n).astype(float)
    if effect == "null":
        tau = np.zeros(n)
    elif effect == "constant":
        tau = np.full(n, 40.0)
    elif effect == "default":
        z_cd4 = (cols["cd40"] - 350) / 118
        z_age = (cols["age"] - 35) / 9
        tau = 40 + 30 * z_cd4 + 10 * z_age - 15 * cols["str2"]
    else:
        raise ValueError(f"unknown effect {effect!r}")
    base = 0.8 * cols["cd40"] + 0.05 * cols["cd80"] - 30 * cols["symptom"] + 0.5 * (cols["karnof"] - 90)
    Y = base + A * tau + rng.normal(0, 80, n)
    return Dataset(W, A, Y, tuple(ACTG175_SCHEMA)), tau


def write_actg_like_csv(path, n: int = 2139, seed: int = 0, effect: str = "default") -> None:
    ds, _ = actg_like(n, seed, effect)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.names, ACTG175_TREATMENT, ACTG175_OUTCOME])
        for w, a, y in zip(ds.W, ds.A, ds.Y):
            writer.writerow([f"{v:.6g}" for v in w] + [str(int(a)), f"{y:.6g}"])


@dataclass(frozen=True)
class RankRow:
    covariate: str
    family: str
    psi: float
    se: float
    ci_lo: float
    ci_hi: float
    iterations: int
    converged: bool
    rank: int = 0
    error: str = ""

    @classmethod
    def from_report(cls, covariate: str, r: EstimateReport) -> "RankRow":
        return cls(covariate, r.family, r.psi, r.se, r.ci_lo, r.ci_hi, r.iterations, r.converged)


def _one_covariate(args):
    dataset, nuisance, tau, j, config, families = args
    name = dataset.names[j]
    try:
        reports = estimate_from_fits(dataset, nuisance, tau, SubsetSpec((j,)), config, ("VIMa",), families)
        return [RankRow.from_report(name, r) for r in reports]
    except Exception as exc:  # noqa: BLE001 - recorded on the row
        log.warning("covariate %s failed: %s", name, exc)
        msg = f"{type(exc).__name__}: {exc}"
        return [RankRow(name, f, math.nan, math.nan, math.nan, math.nan, 0, False, error=msg) for f in families]


def rank_vims(
    dataset: Dataset,
    config: PipelineConfig,
    families: Sequence[str] = ("EE", "TMLE"),
    folds: int = 10,
    covariates: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> list[RankRow]:
    """VIMa of every single covariate with cross-fitted nuisances.

    Nuisances and the CATE are fit once; each covariate only adds its own
    projections and estimators. Covariates are ordered by the TMLE estimate
    (or the first family's) descending, failed ones last.
    """
    check_estimable(dataset)
    config = replace(config, crossfit=folds)
    nuisance = fit_nuisance(
        dataset, config.outcome_learner, config.propensity_learner, folds, config.bounds, config.seed
    )
    tau = fit_tau(dataset, nuisance, config.metalearner, config.cate_learner or config.projection_learner)
    covariates = range(dataset.p) if covariates is None else covariates
    tasks = [(dataset, nuisance, tau, j, config, tuple(families)) for j in covariates]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_cov = list(pool.map(_one_covariate, tasks))
    else:
        per_cov = [_one_covariate(t) for t in tasks]
    key_family = "TMLE" if "TMLE" in families else families[0]

    def sort_key(item):
        idx, rows = item
        psi = next(r.psi for r in rows if r.family == key_family)
        return (math.isnan(psi), -psi if not math.isnan(psi) else 0.0, idx)

    ordered = sorted(enumerate(per_cov), key=sort_key)
    out = []
    for rank, (_, rows) in enumerate(ordered, start=1):
        out.extend(replace(r, rank=rank) for r in rows)
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rank_csv(rows: Sequence[RankRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANK_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in RANK_COLUMNS])


def rank_markdown(rows: Sequence[RankRow]) -> str:
    """One line per covariate with point estimate and 95% interval per family."""
    families = list(dict.fromkeys(r.family for r in rows))
    by_cov: dict = {}
    for r in rows:
        by_cov.setdefault((r.rank, r.covariate), {})[r.family] = r
    head = "| rank | covariate | " + " | ".join(f"{f} VIMa [95% CI]" for f in families) + " |"
    lines = [head, "|" + "---|" * (2 + len(families))]
    for (rank, cov), fam in sorted(by_cov.items()):
        cells = []
        for f in families:
            r = fam.get(f)
            if r is None or math.isnan(r.psi):
                cells.append("failed" if r is not None and r.error else "")
            else:
                cells.append(f"{r.psi:.4g} [{r.ci_lo:.4g}, {r.ci_hi:.4g}]")
        lines.append(f"| {rank} | {cov} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_reports_csv(reports: Sequence[EstimateReport], path) -> None:
    cols = list(reports[0].as_row()) if reports else ["estimand"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r in reports:
            row = r.as_row()
            writer.writerow([_fmt(row[c]) for c in cols])
