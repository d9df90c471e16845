"""Command-line workflow: offline surrogate construction, online pricing,
singular-value studies and file inspection.

Subcommands
-----------
offline        sample an oracle on a Chebyshev grid, complete the value
               tensor, transform to coefficients, write a TTC1 interpolant
               plus a JSON report
price          evaluate an interpolant on a headerless CSV of parameter points
rank-analysis  singular values and numerical ranks of d=2 price surfaces
inspect        dims, ranks and storage of a TTC1 file

Every subcommand reads one JSON file via ``--config`` (``inspect`` and
``price`` take file arguments instead). Failures are reported as a single JSON
object on stderr and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chebyshev import (
    ChebyshevGrid,
    Domain,
    ExtrapolationError,
    coeffs_from_values,
    evaluate,
    load_interpolant,
    save_interpolant,
)
from .completion import CompletionConfig, OracleError, StopReason, adaptive_sampling
from .pricing import (
    RANK_TOL,
    BasketModel,
    BasketPricer,
    numerical_rank,
    single_path_surface,
    singular_values,
    test_oracle_exp_norm,
)
from .seeding import derive_seed
from .tt_core import load_ttc, sidecar_path, storage_bytes

log = logging.getLogger("ttcheb")

EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_BUDGET = 4
EXIT_ROWS = 5


class CliError(Exception):
    """Failure carrying an exit status and a JSON-serializable payload."""

    def __init__(self, status: int, kind: str, message: str, **details):
        super().__init__(message)
        self.status = status
        self.payload = {"error": kind, "message": message, **details}


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

def _grid_from_spec(spec: dict) -> ChebyshevGrid:
    if "domain" not in spec:
        raise ValueError("grid needs a 'domain' (list of [lower, upper] pairs)")
    domain = Domain.from_intervals(spec["domain"])
    orders = spec.get("orders")
    if orders is None:
        if "order" not in spec:
            raise ValueError("grid needs 'orders' or a scalar 'order'")
        orders = [int(spec["order"])] * domain.dim
    if len(orders) != domain.dim:
        raise ValueError(f"{len(orders)} orders given for a {domain.dim}-dimensional domain")
    return ChebyshevGrid(tuple(int(n) for n in orders), domain)


@dataclass
class RunConfig:
    """Everything one offline run needs.

    ``oracle`` is a dict with ``kind`` one of ``basket`` (keys ``model``,
    ``number_sim``), ``analytic`` (key ``function``: ``exp_norm`` or
    ``constant`` with ``value``) or ``command`` (key ``argv``).
    """

    grid: ChebyshevGrid
    oracle: dict
    completion: CompletionConfig
    seed: int = 0
    out_dir: Path = Path("out")
    name: str = "interpolant"
    coeff_method: str = "fft"
    extra: dict = field(default_factory=dict)

    @property
    def interpolant_path(self) -> Path:
        return self.out_dir / f"{self.name}.ttc"

    @property
    def report_path(self) -> Path:
        return self.out_dir / f"{self.name}.report.json"

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None, out: str | None = None) -> "RunConfig":
        d = dict(d)
        if "grid" not in d or "oracle" not in d:
            raise ValueError("config needs 'grid' and 'oracle' sections")
        oracle = d["oracle"]
        if not isinstance(oracle, dict) or "kind" not in oracle:
            raise ValueError("exactly one oracle spec with a 'kind' is required")
        if oracle["kind"] not in ("basket", "analytic", "command"):
            raise ValueError(f"unknown oracle kind {oracle['kind']!r}")
        grid = _grid_from_spec(d["grid"])
        root = int(d.get("seed", 0) if seed is None else seed)
        comp = dict(d.get("completion", {}))
        comp["rng_seed"] = derive_seed(root, "completion") % 2**63
        cfg = CompletionConfig.from_dict(comp)
        output = d.get("output", {})
        out_dir = Path(out if out is not None else output.get("dir", "out"))
        if oracle["kind"] == "basket":
            model = BasketModel.from_dict(oracle["model"])
            if model.d != grid.dim:
                raise ValueError(f"basket of dimension {model.d} on a {grid.dim}-dimensional grid")
        return cls(grid=grid, oracle=oracle, completion=cfg, seed=root, out_dir=out_dir,
                   name=output.get("name", "interpolant"),
                   coeff_method=d.get("coeff_method", "fft"))


# ----------------------------------------------------------------------
# Oracles on grid indices
# ----------------------------------------------------------------------

class GridOracle:
    """Adapts a point function to 1-based grid multi-indices."""

    def __init__(self, grid: ChebyshevGrid, fn):
        self.grid = grid
        self.fn = fn

    def __call__(self, idx) -> float:
        return float(self.fn(self.grid.points(np.asarray([idx])))[0])

    def batch(self, indices: np.ndarray) -> np.ndarray:
        return self.fn(self.grid.points(np.asarray(indices)))


class CommandEvaluator:
    """Runs an external program: one point per stdin line, one value per stdout line."""

    def __init__(self, argv: list, timeout: float | None = None):
        if not argv:
            raise ValueError("external command needs a non-empty 'argv'")
        self.argv = [str(a) for a in argv]
        self.timeout = timeout

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        payload = "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in points)
        try:
            proc = subprocess.run(self.argv, input=payload, capture_output=True, text=True,
                                  timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise OracleError(None, f"external command unreachable: {exc}") from exc
        if proc.returncode != 0:
            raise OracleError(None, f"external command exited with {proc.returncode}: {proc.stderr.strip()}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(points):
            raise OracleError(None, f"external command returned {len(lines)} values for {len(points)} points")
        return np.array([float(ln) for ln in lines])


def build_oracle(cfg: RunConfig) -> GridOracle:
    spec = cfg.oracle
    kind = spec["kind"]
    if kind == "basket":
        model = BasketModel.from_dict(spec["model"])
        pricer = BasketPricer(model, int(spec.get("number_sim", 1000)), derive_seed(cfg.seed, "mc"))
        return GridOracle(cfg.grid, pricer.batch)
    if kind == "analytic":
        name = spec.get("function", "exp_norm")
        if name == "exp_norm":
            return GridOracle(cfg.grid, lambda pts: np.atleast_1d(test_oracle_exp_norm(pts)))
        if name == "constant":
            value = float(spec.get("value", 1.0))
            return GridOracle(cfg.grid, lambda pts: np.full(len(pts), value))
        raise ValueError(f"unknown analytic function {name!r}")
    return GridOracle(cfg.grid, CommandEvaluator(spec["argv"], spec.get("timeout")))


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_offline(cfg: RunConfig) -> dict:
    """Sample, complete, transform and serialize; returns the report."""
    timings = {}
    t0 = time.perf_counter()
    oracle = build_oracle(cfg)
    timings["oracle_setup_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = adaptive_sampling(oracle, cfg.grid.shape, cfg.completion,
                               progress=lambda r: log.info("round %d: |Omega|=%d error=%.3e ranks=%s",
                                                           r["round"], r["training_size"], r["error"], r["ranks"]))
    timings["completion_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    interp = coeffs_from_values(result.tensor, cfg.grid, method=cfg.coeff_method)
    timings["coefficients_s"] = time.perf_counter() - t0

    save_interpolant(interp, cfg.interpolant_path)
    tt_b, full_b = storage_bytes(interp.coeffs)
    report = result.report()
    report.update({
        "orders": list(cfg.grid.orders),
        "domain": cfg.grid.domain.intervals,
        "seed": cfg.seed,
        "oracle": cfg.oracle,
        "completion_config": {k: getattr(cfg.completion, k) for k in cfg.completion.__dataclass_fields__},
        "training_size_trajectory": [n for n, _ in result.error_history],
        "interpolant": str(cfg.interpolant_path),
        "coefficient_ranks": list(interp.coeffs.ranks),
        "coefficient_storage_bytes": {"tt": tt_b, "full": full_b},
        "timings": timings,
    })
    _write_json(cfg.report_path, report)

    criteria_enabled = (cfg.completion.tol is not None or cfg.completion.tol_prime is not None
                        or cfg.completion.stop_on_rank_cap)
    if result.stop_reason is StopReason.SAMPLING_BUDGET_EXHAUSTED and criteria_enabled:
        raise CliError(EXIT_BUDGET, "budget_exhausted",
                       f"sampling budget p={cfg.completion.p} reached before any stopping criterion",
                       report=str(cfg.report_path), final_error=report["final_error"])
    return report


def read_points_csv(path: str | Path, d: int) -> tuple[np.ndarray, list]:
    """Parse a headerless CSV; returns the points and ``(row, message)`` problems.

    Rows are numbered from 1. Unparseable rows produce NaN points.
    """
    rows, problems = [], []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                problems.append((k, "not numeric"))
                rows.append([np.nan] * d)
                continue
            if len(vals) != d:
                problems.append((k, f"expected {d} columns, got {len(vals)}"))
                rows.append([np.nan] * d)
                continue
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, d), problems


def cmd_price(interp_path: str | Path, batch_path: str | Path, out_path: str | Path,
              allow_extrapolation: bool = False, timing: bool = False) -> dict:
    """Price every row of the batch file; rejected rows are written as ``nan``."""
    interp = load_interpolant(interp_path)
    d = interp.grid.dim
    points, problems = read_points_csv(batch_path, d)
    bad_rows = {k for k, _ in problems}
    prices = np.full(len(points), np.nan)
    times = []
    row_numbers = _row_numbers(batch_path)
    for i, p in enumerate(points):
        row = row_numbers[i]
        if row in bad_rows:
            continue
        t0 = time.perf_counter()
        try:
            prices[i] = evaluate(interp, p, allow_extrapolation=allow_extrapolation)
        except ExtrapolationError as exc:
            problems.append((row, str(exc)))
            continue
        times.append(time.perf_counter() - t0)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        for v in prices:
            fh.write(f"{float(v)!r}\n")
    summary = {"rows": len(points), "priced": int(np.isfinite(prices).sum()), "output": str(out_path)}
    if timing:
        summary["median_seconds_per_price"] = float(np.median(times)) if times else None
    if problems:
        problems.sort()
        raise CliError(EXIT_ROWS, "rejected_rows", f"{len(problems)} row(s) rejected",
                       rows=[{"row": k, "reason": msg} for k, msg in problems], summary=summary)
    return summary


def _row_numbers(path) -> list:
    """1-based line numbers of the non-blank CSV rows, in order."""
    with open(path, newline="") as fh:
        return [k for k, row in enumerate(csv.reader(fh), start=1)
                if row and any(c.strip() for c in row)]


def _singular_value_rows(case: str, sv: np.ndarray) -> list:
    return [[case, k + 1, repr(float(s))] for k, s in enumerate(sv)]


def cmd_rank_analysis(spec: dict, out_dir: str | Path, seed: int = 0) -> dict:
    """Singular values of d=2 price surfaces.

    ``spec["study"]`` is ``alpha`` (single-path surfaces for a list of weight
    pairs) or ``basket`` (Monte Carlo prices on Chebyshev grids for each
    domain and order). Writes ``singular_values.csv`` and ``summary.json``.
    """
    out_dir = Path(out_dir)
    tol = float(spec.get("tolerance", RANK_TOL))
    study = spec.get("study", "alpha")
    cases = []
    if study == "alpha":
        domain = tuple(tuple(iv) for iv in spec.get("domain", [[1.0, 1.5], [1.0, 1.5]]))
        if len(domain) != 2:
            raise ValueError("rank analysis works on d = 2 surfaces")
        for alphas in spec["alphas"]:
            surface = single_path_surface(alphas, float(spec.get("strike", 1.0)), float(spec.get("rate", 0.0)),
                                          float(spec.get("maturity", 1.0)), domain=domain,
                                          resolution=int(spec.get("resolution", 50)))
            cases.append({"case": f"alpha={alphas[0]:g},{alphas[1]:g}", "alphas": list(alphas),
                          "sv": singular_values(surface)})
    elif study == "basket":
        model = BasketModel.from_dict(spec["model"])
        if model.d != 2:
            raise ValueError("rank analysis works on d = 2 surfaces")
        pricer = BasketPricer(model, int(spec.get("number_sim", 100_000)), derive_seed(seed, "mc"))
        for dom in spec.get("domains", [[[0.5, 1.5], [0.5, 1.5]], [[1.0, 1.5], [1.0, 1.5]]]):
            for n in spec.get("orders", [6, 10, 20]):
                grid = ChebyshevGrid((int(n), int(n)), Domain.from_intervals(dom))
                ii, jj = np.meshgrid(np.arange(1, n + 2), np.arange(1, n + 2), indexing="ij")
                pts = grid.points(np.stack([ii.ravel(), jj.ravel()], axis=1))
                surface = pricer.batch(pts).reshape(n + 1, n + 1)
                label = "D=" + "x".join(f"[{a:g},{b:g}]" for a, b in dom) + f",n={n}"
                cases.append({"case": label, "domain": dom, "order": int(n), "sv": singular_values(surface)})
    else:
        raise ValueError(f"unknown study {study!r}")

    rows = []
    summary = {"study": study, "tolerance": tol, "cases": []}
    for c in cases:
        sv = c.pop("sv")
        rows.extend(_singular_value_rows(c["case"], sv))
        c["rank"] = numerical_rank(sv, tol)
        c["sigma_max"] = float(sv[0]) if sv.size else 0.0
        summary["cases"].append(c)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "singular_values.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "k", "sigma"])
        w.writerows(rows)
    _write_json(out_dir / "summary.json", summary)
    return summary


def cmd_inspect(path: str | Path) -> dict:
    x = load_ttc(path)
    tt_b, full_b = storage_bytes(x)
    info = {"path": str(path), "order": x.order, "dims": list(x.dims), "ranks": list(x.ranks),
            "max_rank": x.max_rank, "storage_bytes": {"tt": tt_b, "full": full_b}}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        for key in ("orders", "domain"):
            if key in meta:
                info[key] = meta[key]
    return info


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------

def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_CONFIG, "config_unreadable", str(exc), path=path) from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, "config_invalid_json", str(exc), path=path) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttcheb", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="build an interpolant from an oracle")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the root seed")
    p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("price", help="evaluate an interpolant on a CSV batch")
    p.add_argument("interpolant", help="TTC1 file written by 'offline'")
    p.add_argument("batch", help="headerless CSV, one parameter point per row")
    p.add_argument("--out", required=True, help="output CSV, one price per row")
    p.add_argument("--allow-extrapolation", action="store_true", help="accept points outside the domain")
    p.add_argument("--timing", action="store_true", help="report the median time per price")

    p = sub.add_parser("rank-analysis", help="singular values of d=2 price surfaces")
    p.add_argument("--config", required=True, help="JSON study configuration")
    p.add_argument("--seed", type=int, help="override the root seed")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("inspect", help="dims, ranks and storage of a TTC1 file")
    p.add_argument("path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "offline":
            raw = _load_json(args.config)
            try:
                cfg = RunConfig.from_dict(raw, seed=args.seed, out=args.out)
            except (ValueError, KeyError, TypeError) as exc:
                raise CliError(EXIT_CONFIG, "config_invalid", str(exc)) from exc
            try:
                report = cmd_offline(cfg)
            except OracleError as exc:
                raise CliError(EXIT_ORACLE, "oracle_failure", str(exc),
                               index=list(exc.index) if exc.index is not None else None) from exc
            out = {k: report[k] for k in ("stop_reason", "final_error", "final_training_size", "final_ranks")}
            out.update(interpolant=str(cfg.interpolant_path), report=str(cfg.report_path))
        elif args.command == "price":
            try:
                out = cmd_price(args.interpolant, args.batch, args.out, args.allow_extrapolation, args.timing)
            except (OSError, ValueError) as exc:
                raise CliError(EXIT_CONFIG, "input_invalid", str(exc)) from exc
        elif args.command == "rank-analysis":
            raw = _load_json(args.config)
            seed = int(raw.get("seed", 0) if args.seed is None else args.seed)
            try:
                out = cmd_rank_analysis(raw, args.out or raw.get("out", "rank_analysis"), seed)
            except (ValueError, KeyError, TypeError) as exc:
                raise CliError(EXIT_CONFIG, "config_invalid", str(exc)) from exc
        else:
            try:
                out = cmd_inspect(args.path)
            except (OSError, ValueError) as exc:
                raise CliError(EXIT_CONFIG, "input_invalid", str(exc)) from exc
    except CliError as exc:
        print(json.dumps(exc.payload, default=str), file=sys.stderr)
        return exc.status
    print(json.dumps(out, indent=2, default=str))
    return 0


def main_entry() -> None:
    """Console-script wrapper: exits with the status returned by :func:`main`."""
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
