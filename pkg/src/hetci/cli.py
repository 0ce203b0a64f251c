"""Command-line front-end: data ingestion, intervals, simulation studies.

Commands
--------
ci        confidence interval for a quantile of a grouped CSV sample
simulate  run one simulation configuration, write one aggregate row
coverage  run a grid of configurations, write a coverage table
errors    write per-replication error records for one configuration

Exit codes: 0 success, 2 validation/usage error, 3 numerical error.
Output files are written atomically and accompanied by a ``.manifest.json``
sidecar that echoes everything needed to reproduce them byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataFormatError, AssumptionViolationError, HetciError
from .harness import (
    CoverageReport,
    SimulationConfig,
    coverage_table,
    error_samples,
    error_summary,
)
from .quantile import (
    GroupedSample,
    confidence_interval,
    iid_confidence_interval,
    iid_variance,
    variance_estimator,
)

__all__ = ["ingest", "write_sample_csv", "RunManifest", "main"]

DEFAULT_FAMILIES = ("I", "II", "III")
DEFAULT_GAMMAS = (1.0, 2.0, 3.0, 4.0)
DEFAULT_DESIGNS = ("twin", "triangular")
SEED_ENV_VAR = "HETCI_SEED"


# ---------------------------------------------------------------------------
# Data ingestion and serialization
# ---------------------------------------------------------------------------

def ingest(path, fmt: str = "csv", singletons: str = "error") -> GroupedSample:
    """Read a grouped sample from a CSV file with header ``value,group``.

    Groups are assigned dense ids in order of first appearance.  Lines
    starting with ``#`` and blank lines are ignored.  ``singletons`` decides
    what happens to groups with a single observation: ``"error"`` rejects
    the file, ``"drop"`` removes those observations with a warning.
    """
    if fmt != "csv":
        raise DataFormatError(f"unsupported input format {fmt!r}; only 'csv'")
    if singletons not in ("error", "drop"):
        raise DataFormatError(
            f"singletons policy must be 'error' or 'drop', got {singletons!r}"
        )
    values: list[float] = []
    labels: list[str] = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if [c.strip().lower() for c in row] != ["value", "group"]:
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected header 'value,group', got {line!r}"
                    )
                header_seen = True
                continue
            if len(row) != 2:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected 2 fields, got {len(row)}"
                )
            try:
                value = float(row[0])
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: cannot parse value {row[0]!r}"
                ) from None
            if not math.isfinite(value):
                raise DataFormatError(
                    f"{path}: line {lineno}: non-finite value {row[0]!r}"
                )
            label = row[1].strip()
            if not label:
                raise DataFormatError(f"{path}: line {lineno}: empty group label")
            values.append(value)
            labels.append(label)
    if not header_seen:
        raise DataFormatError(f"{path}: empty file (no header)")
    if not values:
        raise DataFormatError(f"{path}: no data rows")

    order: dict[str, int] = {}
    for lab in labels:
        order.setdefault(lab, len(order))
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    single = [lab for lab, c in counts.items() if c < 2]
    if single:
        if singletons == "error":
            raise AssumptionViolationError(
                f"{path}: singleton group(s) {single}: every group needs >= 2 "
                "observations (rerun with the 'drop' policy to discard them)"
            )
        warnings.warn(
            f"dropping {len(single)} singleton group(s) {single} "
            f"({len(single)} observation(s) discarded)",
            stacklevel=2,
        )
        keep = [lab not in single for lab in labels]
        values = [v for v, k in zip(values, keep) if k]
        labels = [lab for lab, k in zip(labels, keep) if k]
        order = {}
        for lab in labels:
            order.setdefault(lab, len(order))
    group_of = np.array([order[lab] for lab in labels], dtype=np.int64)
    return GroupedSample(values=np.array(values), group_of=group_of)


def write_sample_csv(sample: GroupedSample, path) -> None:
    """Serialize a sample to the ingestion format (group ids as labels)."""
    lines = ["value,group"]
    for v, gid in zip(sample.values, sample.group_of):
        lines.append(f"{_fmt(float(v))},{gid}")
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Shortest round-trip decimal representation (repr semantics)."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None, manifest: "RunManifest | None") -> None:
    """Write to a file (plus manifest sidecar) or to stdout for '-'."""
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    _atomic_write_text(path, text)
    if manifest is not None:
        _atomic_write_text(
            Path(str(path) + ".manifest.json"), manifest.to_json() + "\n"
        )


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce an output file exactly."""

    command: str
    options: dict
    base_seed: int | None
    version: str
    created_utc: str
    input_sha256: str | None = None
    summary: dict | None = None

    @classmethod
    def create(cls, command, options, base_seed, input_path=None, summary=None):
        digest = None
        if input_path is not None:
            digest = hashlib.sha256(Path(input_path).read_bytes()).hexdigest()
        return cls(
            command=command,
            options=options,
            base_seed=base_seed,
            version=__version__,
            created_utc=datetime.now(timezone.utc).isoformat(),
            input_sha256=digest,
            summary=summary,
        )

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _report_row(report: CoverageReport) -> list:
    return [getattr(report, f.name) for f in dataclasses.fields(CoverageReport)]


_REPORT_HEADER = [f.name for f in dataclasses.fields(CoverageReport)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataFormatError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}"
            ) from None
    return 0


def _interval_payload(ci) -> dict:
    return {
        "half_width_level": ci.half_width_level,
        "lower": "-inf" if ci.lower_clipped else ci.lower,
        "upper": "inf" if ci.upper_clipped else ci.upper,
        "lower_clipped": ci.lower_clipped,
        "upper_clipped": ci.upper_clipped,
    }


def _cmd_ci(args) -> int:
    sample = ingest(args.input, singletons=args.singletons)
    ve = variance_estimator(sample, args.tau)
    ci = confidence_interval(sample, args.tau, args.alpha)
    iid = iid_confidence_interval(sample, args.tau, args.alpha)
    payload = {
        "n": sample.n,
        "g": sample.g,
        "tau": args.tau,
        "alpha": args.alpha,
        "point": ci.point,
        "v_hat": ve.v_hat,
        "n_v_hat": ve.n_v_hat,
        "low_information_warning": ci.low_information_warning,
        **_interval_payload(ci),
        "iid_baseline": {"v": iid_variance(args.tau), **_interval_payload(iid)},
    }
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        flat = {k: v for k, v in payload.items() if k != "iid_baseline"}
        for k, v in payload["iid_baseline"].items():
            flat[f"iid_{k}"] = v
        sys.stdout.write(_csv_text(list(flat), [list(flat.values())]))
    if ci.low_information_warning:
        print(
            f"warning: n * v_hat = {_fmt(ve.n_v_hat)} < 10; the normal "
            "approximation may be unreliable",
            file=sys.stderr,
        )
    return 0


def _config_from_args(args, seed: int) -> SimulationConfig:
    return SimulationConfig(
        family=args.family,
        gamma=args.gamma,
        design=args.design,
        n=args.n,
        tau=args.tau,
        alpha=args.alpha,
        reps=args.reps,
        base_seed=seed,
    )


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    config = _config_from_args(args, seed)
    report = coverage_table([config], workers=args.workers)[0]
    manifest = RunManifest.create(
        "simulate", _echo_options(args), seed
    )
    _emit(_csv_text(_REPORT_HEADER, [_report_row(report)]), args.out, manifest)
    return 0


def _read_grid(path) -> list[tuple[str, float, str]]:
    cells = []
    with open(path, "r", encoding="utf-8") as fp:
        header_seen = False
        for lineno, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if [c.strip().lower() for c in row] != ["family", "gamma", "design"]:
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected header "
                        f"'family,gamma,design', got {line!r}"
                    )
                header_seen = True
                continue
            if len(row) != 3:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected 3 fields, got {len(row)}"
                )
            try:
                gamma = float(row[1])
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: cannot parse gamma {row[1]!r}"
                ) from None
            cells.append((row[0].strip(), gamma, row[2].strip()))
    if not cells:
        raise DataFormatError(f"{path}: no grid rows")
    return cells


def _default_grid() -> list[tuple[str, float, str]]:
    return [
        (fam, gamma, design)
        for design in DEFAULT_DESIGNS
        for fam in DEFAULT_FAMILIES
        for gamma in DEFAULT_GAMMAS
    ]


def _coverage_table_text(reports: list[CoverageReport]) -> str:
    designs: list[str] = []
    for r in reports:
        if r.design not in designs:
            designs.append(r.design)
    cells = {(r.design, r.gamma, r.family): r.coverage_het for r in reports}
    rows = []
    for design in designs:
        gammas = sorted({r.gamma for r in reports if r.design == design})
        for gamma in gammas:
            row = [design, gamma]
            for fam in DEFAULT_FAMILIES:
                row.append(cells.get((design, gamma, fam), ""))
            rows.append(row)
    return _csv_text(["design", "gamma", "I", "II", "III"], rows)


def _cmd_coverage(args) -> int:
    seed = _resolve_seed(args)
    grid = _read_grid(args.grid) if args.grid else _default_grid()
    configs = [
        SimulationConfig(
            family=fam,
            gamma=gamma,
            design=design,
            n=args.n,
            tau=args.tau,
            alpha=args.alpha,
            reps=args.reps,
            base_seed=seed,
        )
        for fam, gamma, design in grid
    ]
    reports = coverage_table(configs, workers=args.workers)
    manifest = RunManifest.create(
        "coverage", _echo_options(args), seed,
        input_path=args.grid if args.grid else None,
    )
    _emit(_coverage_table_text(reports), args.out, manifest)
    if args.details:
        _emit(
            _csv_text(_REPORT_HEADER, [_report_row(r) for r in reports]),
            args.details,
            manifest,
        )
    return 0


def _cmd_errors(args) -> int:
    seed = _resolve_seed(args)
    config = _config_from_args(args, seed)
    records = error_samples(config, workers=args.workers)
    summary = error_summary(records)
    header = ["rep_id", "error_het", "error_iid", "v_hat", "v_tilde",
              "width_het", "width_iid"]
    rows = [
        [r.rep_id, r.error_het, r.error_iid, r.v_hat, r.v_tilde,
         r.width_het, r.width_iid]
        for r in records
    ]
    manifest = RunManifest.create(
        "errors", _echo_options(args), seed,
        summary=dataclasses.asdict(summary),
    )
    _emit(_csv_text(header, rows), args.out, manifest)
    print(
        f"var_error_het={_fmt(summary.var_error_het)} "
        f"var_error_iid={_fmt(summary.var_error_iid)} "
        f"variance_ratio={_fmt(summary.variance_ratio)}",
        file=sys.stderr,
    )
    return 0


def _echo_options(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_sim_flags(p: argparse.ArgumentParser, with_family: bool = True) -> None:
    if with_family:
        p.add_argument("--family", required=True, choices=list(DEFAULT_FAMILIES))
        p.add_argument("--gamma", required=True, type=float)
        p.add_argument("--design", required=True, choices=list(DEFAULT_DESIGNS))
    p.add_argument("--n", type=int, default=350)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None,
                   help=f"base seed (default: ${SEED_ENV_VAR} or 0)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output path, or '-' for stdout")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetci",
        description="Quantile confidence intervals for grouped heterogeneous data.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ci = sub.add_parser("ci", help="confidence interval from a CSV sample")
    p_ci.add_argument("--input", required=True)
    p_ci.add_argument("--tau", required=True, type=float)
    p_ci.add_argument("--alpha", required=True, type=float)
    p_ci.add_argument("--singletons", choices=["error", "drop"], default="error")
    p_ci.add_argument("--format", choices=["json", "csv"], default="json")
    p_ci.set_defaults(func=_cmd_ci)

    p_sim = sub.add_parser("simulate", help="run one configuration")
    _add_sim_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_cov = sub.add_parser("coverage", help="run a configuration grid")
    p_cov.add_argument("--grid", default=None,
                       help="CSV with header family,gamma,design "
                            "(default: full built-in grid)")
    _add_sim_flags(p_cov, with_family=False)
    p_cov.add_argument("--details", default=None,
                       help="also write full per-configuration rows here")
    p_cov.set_defaults(func=_cmd_coverage)

    p_err = sub.add_parser("errors", help="per-replication error records")
    _add_sim_flags(p_err)
    p_err.set_defaults(func=_cmd_errors)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except HetciError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
