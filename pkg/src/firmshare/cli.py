"""Command-line front end: CSV ingestion, command dispatch, report emission.

Reports are deterministic given (input, config, seed): floats serialize with
17 significant digits and the timestamp can be suppressed.  Exit codes:
0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .aggregation import (
    MicroTechnology,
    TechGradient,
    aggregate_exact,
    derive_aggregate,
    derive_labor_share,
    derive_tfp,
    derive_theta,
    macro_labor_share,
    physical_elasticity_correction,
    scale_share_gradient,
    validate_regularity,
    weighting_factor,
)
from .decomposition import counterfactual_contribution, counterfactual_from_contribution, melitz_polanec
from .distribution import SingularityError, TruncatedPareto, mean_log_weighted_quad
from .estimation import hill_tail, rank_regression_tail
from .market_structure import FirmRecord, build_panel, labor_share
from .simulation import SyntheticSpec, generate_population, gradient_for_delta
from .verify import run_all_checks

SEED_ENV_VAR = "FIRMSHARE_SEED"

REQUIRED_COLUMNS = (
    "firm_id",
    "year",
    "region",
    "industry",
    "output",
    "labor",
    "capital",
    "wage_bill",
)


class CsvSchemaError(ValueError):
    """Input CSV is missing required columns or a header."""


class CsvRowError(ValueError):
    """One or more rows failed validation; diagnostics carry line numbers."""

    def __init__(self, diagnostics: list[str]):
        super().__init__(f"{len(diagnostics)} invalid row(s)")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AnalysisConfig:
    """Run configuration; flags beat the config file, which beats defaults."""

    basis: str = "value_added"
    min_cell_size: int = 30
    hill_k_fraction: float = 0.10
    sigma: float = 3.0
    seed: int = 0
    winsorize: bool = False
    output_format: str = "json"

    def __post_init__(self) -> None:
        if self.sigma <= 1.0:
            raise ValueError("sigma must exceed 1")


def parse_firm_csv(path: str) -> list[FirmRecord]:
    """Read a firm panel CSV, rejecting invalid rows with line-numbered diagnostics.

    The schema is a header row with at least the required columns
    (firm_id, year, region, industry, output, labor, capital, wage_bill) and
    optionally value_added; decimal points only, no thousands separators.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise CsvSchemaError(f"{path}: empty file, header row required")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise CsvSchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
        has_va = "value_added" in reader.fieldnames

        records: list[FirmRecord] = []
        diagnostics: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            try:
                va_text = (row.get("value_added") or "").strip() if has_va else ""
                records.append(
                    FirmRecord(
                        firm_id=row["firm_id"],
                        year=int(row["year"]),
                        region=row["region"],
                        industry=row["industry"],
                        output=float(row["output"]),
                        labor=float(row["labor"]),
                        capital=float(row["capital"]),
                        wage_bill=float(row["wage_bill"]),
                        value_added=float(va_text) if va_text else None,
                    )
                )
            except (TypeError, ValueError) as exc:
                diagnostics.append(f"{path}:{line_no}: {exc}")
    if diagnostics:
        raise CsvRowError(diagnostics)
    return records


def write_firm_csv(records, path_or_handle) -> None:
    """Write firm records in the same schema parse_firm_csv reads."""
    own = isinstance(path_or_handle, (str, os.PathLike))
    handle = open(path_or_handle, "w", newline="", encoding="utf-8") if own else path_or_handle
    try:
        writer = csv.writer(handle)
        writer.writerow(REQUIRED_COLUMNS + ("value_added",))
        for rec in records:
            writer.writerow(
                [
                    rec.firm_id,
                    rec.year,
                    rec.region,
                    rec.industry,
                    _fmt_float(rec.output),
                    _fmt_float(rec.labor),
                    _fmt_float(rec.capital),
                    _fmt_float(rec.wage_bill),
                    "" if rec.value_added is None else _fmt_float(rec.value_added),
                ]
            )
    finally:
        if own:
            handle.close()


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps_report(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits, so reports are byte-stable."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{key}": {dumps_report(val, indent + 1)}' for key, val in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(f"{pad}  {dumps_report(val, indent + 1)}" for val in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value in report: {value}")
        return _fmt_float(value)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj).__name__} in a report")


def _flatten(obj, prefix=""):
    rows = []
    if isinstance(obj, dict):
        for key, val in obj.items():
            rows.extend(_flatten(val, f"{prefix}{key}." if prefix else f"{key}."))
    elif isinstance(obj, (list, tuple)):
        for i, val in enumerate(obj):
            rows.extend(_flatten(val, f"{prefix}{i}."))
    else:
        rows.append((prefix[:-1], obj))
    return rows


def render_csv(report: dict) -> str:
    """CSV rendering: a table when results are a list of flat dicts, else key,value rows."""
    results = report.get("results")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if (
        isinstance(results, list)
        and results
        and all(isinstance(row, dict) for row in results)
    ):
        columns = list(results[0].keys())
        writer.writerow(columns)
        for row in results:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
    else:
        writer.writerow(["key", "value"])
        for key, val in _flatten(report):
            writer.writerow([key, _csv_cell(val)])
    return buffer.getvalue()


def _csv_cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return _fmt_float(value)
    if value is None:
        return ""
    return value


def _load_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


_CONFIG_CASTS = {
    "basis": str,
    "min_cell_size": int,
    "hill_k_fraction": float,
    "sigma": float,
    "seed": int,
    "winsorize": lambda s: s.lower() in ("1", "true", "yes"),
    "output_format": str,
}


def resolve_config(args: argparse.Namespace) -> AnalysisConfig:
    """Merge CLI flags, the optional key=value file, and the seed env var."""
    file_values: dict = {}
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        unknown = set(raw) - set(_CONFIG_CASTS)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        file_values = {k: _CONFIG_CASTS[k](v) for k, v in raw.items()}

    def pick(name, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_values:
            return file_values[name]
        return default

    seed_default = 0
    if os.environ.get(SEED_ENV_VAR):
        seed_default = int(os.environ[SEED_ENV_VAR])
    return AnalysisConfig(
        basis=pick("basis", "value_added"),
        min_cell_size=pick("min_cell_size", 30),
        hill_k_fraction=pick("hill_k_fraction", 0.10),
        sigma=pick("sigma", 3.0),
        seed=pick("seed", seed_default),
        winsorize=bool(pick("winsorize", False)),
        output_format=pick("output_format", "json"),
    )


def _config_echo(config: AnalysisConfig) -> dict:
    return {
        "basis": config.basis,
        "min_cell_size": config.min_cell_size,
        "hill_k_fraction": config.hill_k_fraction,
        "sigma": config.sigma,
        "seed": config.seed,
        "winsorize": config.winsorize,
        "output_format": config.output_format,
    }


def build_report(command, config, results, warnings=(), timestamp=True) -> dict:
    report = {
        "command": command,
        "config": _config_echo(config),
        "seed": config.seed,
        "results": results,
        "warnings": list(warnings),
        "version": __version__,
    }
    if timestamp:
        report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return report


def _dist_from_args(args) -> TruncatedPareto:
    y_min = args.y_min
    if args.r is not None:
        if args.y_max is not None:
            raise ValueError("give either --r or --y-max, not both")
        return TruncatedPareto(args.xi, y_min, y_min * args.r)
    if args.y_max is None:
        raise ValueError("one of --r or --y-max is required")
    return TruncatedPareto(args.xi, y_min, args.y_max)


def _exact_macro_share(base_ls, delta, dist) -> float:
    try:
        mean_log = dist.mean_log_weighted() / dist.moment(1.0) - math.log(dist.y_min)
    except SingularityError:
        mean_log = mean_log_weighted_quad(dist) / dist.moment(1.0) - math.log(dist.y_min)
    return base_ls + delta * mean_log


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_moments(args, config):
    dist = _dist_from_args(args)
    orders = args.order if args.order else [1.0]
    warnings = []
    try:
        mean_log = dist.mean_log_weighted()
    except SingularityError:
        mean_log = mean_log_weighted_quad(dist)
        warnings.append("xi within 1e-9 of 1: E[y ln y] computed by quadrature fallback")
    results = {
        "xi": dist.xi,
        "y_min": dist.y_min,
        "y_max": dist.y_max,
        "r": dist.r,
        "z": dist.z,
        "orders": orders,
        "moments": [dist.moment(a) for a in orders],
        "mean": dist.moment(1.0),
        "mean_log_weighted": mean_log,
    }
    return results, warnings


def _cmd_fit_tail(args, config):
    records = parse_firm_csv(args.input)
    outputs = np.array([r.output for r in records])
    rank_fit = rank_regression_tail(outputs)
    results = {
        "n_firms": len(records),
        "rank_regression": {
            "alpha_hat": rank_fit.alpha_hat,
            "stderr": rank_fit.stderr,
            "stderr_ols": rank_fit.stderr_ols,
            "n_used": rank_fit.n_used,
        },
        "hill": None,
    }
    warnings = []
    try:
        hill_fit = hill_tail(outputs, config.hill_k_fraction)
        results["hill"] = {
            "alpha_hat": hill_fit.alpha_hat,
            "stderr": hill_fit.stderr,
            "k": hill_fit.k,
            "n_used": hill_fit.n_used,
        }
    except ValueError as exc:
        warnings.append(f"hill estimator skipped: {exc}")
    return results, warnings


def _tech_from_args(args) -> MicroTechnology:
    return MicroTechnology(beta=args.beta, gamma=args.gamma, l0=args.l0, k0=args.k0)


def _cmd_aggregate(args, config):
    dist = _dist_from_args(args)
    tech = _tech_from_args(args)
    theta = derive_theta(tech.beta, tech.gamma)
    tfp = derive_tfp(tech, dist)
    total_y, total_l, total_k = aggregate_exact(tech, dist, args.n_firms)
    identity_err = abs(total_y - tfp * total_l ** (1.0 - theta) * total_k**theta) / total_y
    results = {
        "regularity": validate_regularity(tech).value,
        "theta": theta,
        "labor_share": derive_labor_share(tech.beta, tech.gamma),
        "tfp": tfp,
        "Y": total_y,
        "L": total_l,
        "K": total_k,
        "identity_rel_error": identity_err,
    }
    return results, []


def _cmd_weighting(args, config):
    dist = _dist_from_args(args)
    if args.ls is not None or args.delta is not None:
        if args.ls is None or args.delta is None:
            raise ValueError("--ls and --delta must be given together")
        base_ls, delta = args.ls, args.delta
        source = "supplied"
    else:
        if args.beta is None or args.gamma is None:
            raise ValueError("give either --ls/--delta or --beta/--gamma (with --b/--g)")
        tech = MicroTechnology(args.beta, args.gamma)
        grad = TechGradient(b=args.b, g=args.g)
        base_ls = derive_labor_share(tech.beta, tech.gamma)
        delta = scale_share_gradient(tech, grad)
        source = "derived"
    phi = weighting_factor(dist.xi, dist.r)
    results = {
        "xi": dist.xi,
        "r": dist.r,
        "base_ls": base_ls,
        "delta": delta,
        "delta_source": source,
        "phi": phi,
        "macro_ls": base_ls + delta * phi,
        "macro_ls_exact": _exact_macro_share(base_ls, delta, dist),
    }
    return results, []


def _cmd_panel(args, config):
    records = parse_firm_csv(args.input)
    panel = build_panel(
        records,
        min_cell_size=config.min_cell_size,
        basis=config.basis,
        winsorize=config.winsorize,
    )
    results = [
        {
            "region": c.region,
            "industry": c.industry,
            "year": c.year,
            "n_firms": c.n_firms,
            "weighted_ls": c.weighted_ls,
            "alpha_hat": c.alpha_hat,
            "hhi": c.hhi,
            "cr4": c.cr4,
            "gini": c.gini,
            "mean_size": c.mean_size,
        }
        for c in panel.cells
    ]
    warnings = []
    if panel.dropped_cells:
        warnings.append(f"dropped {panel.dropped_cells} cell(s) below {config.min_cell_size} firms")
    if panel.n_ls_above_one:
        warnings.append(f"{panel.n_ls_above_one} firm(s) with labor share above 1 (kept)")
    return results, warnings


def _cmd_decompose_mp(args, config):
    records = parse_firm_csv(args.input)
    periods = {}
    for year in (args.year1, args.year2):
        subset = [r for r in records if r.year == year]
        if not subset:
            raise ValueError(f"no records for year {year}")
        periods[year] = [
            (r.firm_id, r.output, labor_share(r, config.basis)) for r in subset
        ]
    comp = melitz_polanec(periods[args.year1], periods[args.year2])
    results = {
        "year1": args.year1,
        "year2": args.year2,
        "total_change": comp.total_change,
        "within": comp.within,
        "between": comp.between,
        "exit": comp.exit,
        "entry": comp.entry,
    }
    return results, []


def _cmd_counterfactual(args, config):
    if args.contribution is not None:
        result = counterfactual_from_contribution(args.total, args.contribution)
    else:
        if args.coefficient is None or args.alpha_start is None or args.alpha_end is None:
            raise ValueError(
                "give --contribution, or all of --coefficient/--alpha-start/--alpha-end"
            )
        result = counterfactual_contribution(
            args.total, args.coefficient, args.alpha_start, args.alpha_end
        )
    warnings = []
    if result.distribution_share is None:
        warnings.append("total change is ~0: contribution shares not applicable")
    results = {
        "total_change_pp": result.total_change,
        "distribution_contribution_pp": result.distribution_contribution,
        "residual_contribution_pp": result.residual_contribution,
        "distribution_share_pct": result.distribution_share,
        "residual_share_pct": result.residual_share,
    }
    return results, []


def _cmd_simulate(args, config):
    dist = _dist_from_args(args)
    tech = _tech_from_args(args)
    if args.delta is not None:
        if args.b_grad or args.g_grad:
            raise ValueError("give either --delta or --b/--g gradients, not both")
        grad = gradient_for_delta(tech, args.delta)
    else:
        grad = TechGradient(b=args.b_grad, g=args.g_grad)
    spec = SyntheticSpec(
        dist=dist,
        tech=tech,
        grad=grad,
        noise_labor_sd=args.noise_labor_sd,
        noise_capital_sd=args.noise_capital_sd,
        noise_ls_sd=args.noise_ls_sd,
        n_firms=args.n_firms,
        seed=config.seed,
        ls_mode=args.ls_mode,
        intermediate_share=args.intermediate_share,
        region=args.region,
        industry=args.industry,
        year=args.year,
    )
    pop = generate_population(spec)
    if args.population_out:
        write_firm_csv(pop.to_records(), args.population_out)
    results = {
        "n_firms": len(pop),
        "planted": {
            "xi": dist.xi,
            "r": dist.r,
            "beta": tech.beta,
            "gamma": tech.gamma,
            "b": grad.b,
            "g": grad.g,
            "delta": scale_share_gradient(tech, grad),
            "ls_mode": spec.ls_mode,
            "intermediate_share": spec.intermediate_share,
        },
        "weighted_ls": pop.weighted_ls,
        "mean_ls": float(pop.ls.mean()),
        "population_csv": args.population_out,
    }
    warnings = [
        "value added is a fixed calibration (1 - intermediate_share) of output, not ground truth"
    ]
    return results, warnings


def _cmd_verify(args, config):
    checks = run_all_checks(config.seed)
    results = [
        {
            "check": c.name,
            "passed": c.passed,
            "worst": c.worst,
            "tolerance": c.tolerance,
            "detail": c.detail,
        }
        for c in checks
    ]
    warnings = [f"FAILED: {c.name}" for c in checks if not c.passed]
    return results, warnings


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags win over it")
    parser.add_argument("--out", help="write the report to this path instead of stdout")
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp for byte-stable reports")


def _add_dist_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--xi", type=float, required=True, help="Pareto shape parameter")
    parser.add_argument("--y-min", type=float, default=1.0)
    parser.add_argument("--y-max", type=float)
    parser.add_argument("--r", type=float, help="range ratio y_max / y_min")


def _add_tech_args(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--beta", type=float, required=required)
    parser.add_argument("--gamma", type=float, required=required)
    parser.add_argument("--l0", type=float, default=1.0)
    parser.add_argument("--k0", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="firmshare",
        description="Firm-size distribution algebra, aggregation, and labor-share analysis",
    )
    parser.add_argument("--version", action="version", version=f"firmshare {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", help="truncated-Pareto moments and E[y ln y]")
    _add_dist_args(p)
    p.add_argument("--order", type=float, action="append", help="moment order (repeatable)")
    _add_common(p)

    p = sub.add_parser("fit-tail", help="tail-index estimates from a firm CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--hill-k-fraction", dest="hill_k_fraction", type=float)
    _add_common(p)

    p = sub.add_parser("aggregate", help="exact aggregates and the Cobb-Douglas identity")
    _add_dist_args(p)
    _add_tech_args(p)
    p.add_argument("--n-firms", type=float, default=1000.0)
    _add_common(p)

    p = sub.add_parser("weighting", help="weighting factor and macro labor share")
    _add_dist_args(p)
    p.add_argument("--ls", type=float, help="baseline labor share")
    p.add_argument("--delta", type=float, help="scale-share gradient")
    _add_tech_args(p, required=False)
    p.add_argument("--b", dest="b", type=float, default=0.0)
    p.add_argument("--g", dest="g", type=float, default=0.0)
    _add_common(p)

    p = sub.add_parser("panel", help="build city-industry-year cells from a firm CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--basis", choices=("value_added", "output"))
    p.add_argument("--min-cell-size", dest="min_cell_size", type=int)
    p.add_argument("--winsorize", action="store_const", const=True, default=None)
    _add_common(p)

    p = sub.add_parser("decompose-mp", help="Melitz-Polanec decomposition between two years")
    p.add_argument("--input", required=True)
    p.add_argument("--year1", type=int, required=True)
    p.add_argument("--year2", type=int, required=True)
    p.add_argument("--basis", choices=("value_added", "output"))
    _add_common(p)

    p = sub.add_parser("counterfactual", help="distribution-vs-residual contribution split")
    p.add_argument("--total", type=float, required=True, help="total change in pp")
    p.add_argument("--contribution", type=float, help="distribution contribution in pp")
    p.add_argument("--coefficient", type=float)
    p.add_argument("--alpha-start", dest="alpha_start", type=float)
    p.add_argument("--alpha-end", dest="alpha_end", type=float)
    _add_common(p)

    p = sub.add_parser("simulate", help="generate a synthetic firm population")
    _add_dist_args(p)
    _add_tech_args(p)
    p.add_argument("--b", dest="b_grad", type=float, default=0.0)
    p.add_argument("--g", dest="g_grad", type=float, default=0.0)
    p.add_argument("--delta", type=float, help="plant this scale-share gradient instead of --b/--g")
    p.add_argument("--noise-labor-sd", type=float, default=0.0)
    p.add_argument("--noise-capital-sd", type=float, default=0.0)
    p.add_argument("--noise-ls-sd", type=float, default=0.0)
    p.add_argument("--n-firms", type=int, default=1000)
    p.add_argument("--ls-mode", choices=("from_gradient", "from_factors"), default="from_gradient")
    p.add_argument("--intermediate-share", type=float, default=0.7)
    p.add_argument("--region", default="R1")
    p.add_argument("--industry", default="J1")
    p.add_argument("--year", type=int, default=2000)
    p.add_argument("--population-out", help="write the generated firm CSV here")
    _add_common(p)

    p = sub.add_parser("verify", help="run the full oracle suite; nonzero exit on failure")
    _add_common(p)

    return parser


_COMMANDS = {
    "moments": _cmd_moments,
    "fit-tail": _cmd_fit_tail,
    "aggregate": _cmd_aggregate,
    "weighting": _cmd_weighting,
    "panel": _cmd_panel,
    "decompose-mp": _cmd_decompose_mp,
    "counterfactual": _cmd_counterfactual,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse arguments, dispatch, and emit the report; returns the exit code."""
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = resolve_config(args)
        results, warnings = _COMMANDS[args.command](args, config)
        report = build_report(
            args.command, config, results, warnings, timestamp=not args.no_timestamp
        )
        if config.output_format == "csv":
            text = render_csv(report)
        else:
            text = dumps_report(report) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as handle:
                handle.write(text)
        else:
            stdout.write(text)
        if args.command == "verify" and any(not r["passed"] for r in results):
            return 1
        return 0
    except CsvRowError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=stderr)
        return 1
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
