"""Experiment orchestration: verify, audit, norms, sweep and generate.

Outputs are CSV files whose first line carries the only timestamp; everything
after it (the config echo and the data) is a pure function of the config.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .audit import CSV_COLUMNS, AuditReport, audit_weight
from .checks import IDENTITY_TOL, CHECKS, DENSE_CHECKS, make_case, run_identity_suite
from .grid import GridError, GridSpec, WeightError, read_step_function, write_step_function
from .operators import materialize
from .paraproducts import (
    KINDS,
    NINE_LABELS,
    SymbolSequence,
    build_nine_term_resolution,
    decompose_multiplication,
    multiplier_operator,
    paraproduct_operator,
    q_name,
    read_symbol,
)
from .spectral import ConvergenceError, operator_norm
from .weights import Weight, WeightRecipe, corpus, generate

log = logging.getLogger("haarlab")

Q_NAMES = tuple(q_name(k) for k in NINE_LABELS)
SWEEP_COLUMNS = ("weight_id", "family", "seed", "A2", "sigma_norm") + Q_NAMES + ("norm_conjugated", "status")
FIT_COLUMNS = ("operator", "n_points", "slope", "intercept", "max_row_ratio", "slope_cap", "passed")
SLOPE_CAP = 1.05
# the two compositions whose bound is a square root of the characteristic
SQRT_TERMS = ("q_10_01", "q_00_00")
SQRT_SLOPE_CAP = 0.55
ROW_RATIO_CAP = 8.0
FIT_MIN_A2 = 2.0
# norms at or below this multiple of ||sigma|| are round-off of an exact zero
ZERO_NORM = 1e-10


class UsageError(Exception):
    """Bad config or unreadable input; exit status 2."""


# --- config ----------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    d: int = 1
    L: int = 4
    n_weights: int = 20
    a_max: float = 1e3
    families: str = "step,power,cascade"
    sigma: str = "random"  # random | ones | zero | path to a symbol file
    seed: int = 0
    tol: float = 1e-8
    method: str = "auto"  # auto | dense | power
    weight: str = ""  # weight file for norms / verify
    recipe: str = ""  # recipe text for norms
    out: str = "out"
    svg: bool = True
    jobs: int = 1

    def serialize(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self) if f.name not in ("out", "jobs"))

    def grid(self) -> GridSpec:
        try:
            return GridSpec(self.d, self.L)
        except GridError as exc:
            raise UsageError(str(exc)) from None


def _coerce(name, value: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise UsageError(f"unknown config key {name!r}")
    kind = types[name]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
    except ValueError:
        raise UsageError(f"config key {name}: cannot parse {value!r}") from None
    return value


def parse_config_text(text: str, base: ExperimentConfig | None = None, source: str = "<config>") -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    updates = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        updates[k] = _coerce(k, v)
    return replace(cfg, **updates)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    return parse_config_text(text, source=str(path))


# --- shared helpers ------------------------------------------------------------------


def _header(command: str, cfg: ExperimentConfig) -> str:
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    lines = [f"# haarlab {command} {stamp}"]
    lines += [f"# {ln}" for ln in cfg.serialize().splitlines()]
    return "\n".join(lines) + "\n"


def strip_timestamp(text: str) -> str:
    """CSV body without the first (timestamp) line."""
    return text.split("\n", 1)[1] if "\n" in text else ""


def _write_csv(path: Path, header: str, columns, rows):
    buf = io.StringIO()
    buf.write(header)
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    wr.writerows(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, float) else str(x)


def make_sigma(cfg: ExperimentConfig, grid: GridSpec) -> SymbolSequence:
    s = cfg.sigma
    if s == "random":
        return SymbolSequence.random_signs(grid, cfg.seed)
    if s == "ones":
        return SymbolSequence.constant(grid, 1.0)
    if s == "zero":
        return SymbolSequence.zeros(grid)
    try:
        return read_symbol(s, grid)
    except OSError as exc:
        raise UsageError(f"{s}: {exc.strerror}") from None
    except GridError as exc:
        raise UsageError(str(exc)) from None


def make_corpus(cfg: ExperimentConfig) -> list:
    fams = tuple(f.strip() for f in cfg.families.split(",") if f.strip())
    try:
        return corpus(cfg.d, cfg.L, cfg.n_weights, cfg.a_max, seed=cfg.seed, families=fams)
    except (WeightError, GridError) as exc:
        raise UsageError(str(exc)) from None


def load_weight(path) -> Weight:
    try:
        f = read_step_function(path)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except GridError as exc:
        raise UsageError(str(exc)) from None
    try:
        return Weight(f, weight_id=Path(path).stem)
    except WeightError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))  # results come back in input order


# --- ten norms ---------------------------------------------------------------------


@dataclass
class SweepRow:
    weight_id: str
    family: str
    seed: int
    A2: float
    sigma_norm: float
    norms: dict  # q name -> norm
    norm_conjugated: float
    status: str = "ok"

    @property
    def triangle_ok(self) -> bool:
        if self.status != "ok":
            return True
        s = sum(self.norms.values())
        return self.norm_conjugated <= s * (1 + 1e-9) + 1e-12

    def row(self) -> list:
        vals = [self.weight_id, self.family, self.seed, self.A2, self.sigma_norm]
        vals += [self.norms[q] for q in Q_NAMES] + [self.norm_conjugated, self.status]
        return [_fmt(v) for v in vals]


def ten_norms(sigma: SymbolSequence, w: Weight, tol: float = 1e-8, method: str = "auto") -> tuple:
    """Norms of the nine compositions and of the conjugated multiplier.

    On the dense path the six paraproduct factors and T are materialized
    once and the compositions are formed by matrix products.
    """
    grid = w.grid
    la, lh = decompose_multiplication(w.sqrt)
    ra, rh = decompose_multiplication(w.inv_sqrt)
    left = {k: paraproduct_operator(k, la if k == (0, 0) else lh) for k in KINDS}
    right = {k: paraproduct_operator(k, ra if k == (0, 0) else rh) for k in KINDS}
    T = multiplier_operator(sigma)
    dense = method == "dense" or (method == "auto" and grid.n_cells <= 4096)
    norms = {}
    if dense:
        Lm = {k: materialize(op, cap=grid.n_cells) for k, op in left.items()}
        Tm = materialize(T, cap=grid.n_cells)
        TR = {k: Tm @ materialize(op, cap=grid.n_cells) for k, op in right.items()}
        for a, b in NINE_LABELS:
            norms[q_name((a, b))] = operator_norm(Lm[a] @ TR[b], tol=tol, method="dense").value
        conj = w.sqrt.cells[:, None] * Tm * w.inv_sqrt.cells[None, :]
        nc = operator_norm(conj, tol=tol, method="dense").value
        return norms, nc
    for a, b in NINE_LABELS:
        norms[q_name((a, b))] = operator_norm(left[a] @ T @ right[b], tol=tol, method="power").value
    nc = operator_norm(build_nine_term_resolution(sigma, w).conjugated, tol=tol, method="power").value
    return norms, nc


def sweep_row(w: Weight, sigma: SymbolSequence, seed: int, tol: float, method: str) -> SweepRow:
    fam = w.recipe.family if w.recipe else "file"
    try:
        norms, nc = ten_norms(sigma, w, tol, method)
        status = "ok"
    except ConvergenceError as exc:
        log.warning("%s: %s", w.id, exc)
        norms, nc, status = {q: math.nan for q in Q_NAMES}, math.nan, "nonconverged"
    return SweepRow(w.id, fam, seed, w.a2, sigma.sup_norm, norms, nc, status)


def _sweep_job(args):
    cfg, i = args
    w = make_corpus(cfg)[i] if not isinstance(i, Weight) else i
    return sweep_row(w, make_sigma(cfg, w.grid), cfg.seed, cfg.tol, cfg.method)


# --- fits and plots ------------------------------------------------------------------


@dataclass
class FitResult:
    operator: str
    n_points: int
    slope: float
    intercept: float
    max_row_ratio: float
    slope_cap: float

    @property
    def passed(self) -> bool:
        ok_ratio = self.max_row_ratio <= ROW_RATIO_CAP
        if not math.isfinite(self.slope_cap):
            return ok_ratio
        return ok_ratio and self.n_points >= 2 and self.slope <= self.slope_cap

    def row(self) -> list:
        vals = [self.operator, self.n_points, self.slope, self.intercept, self.max_row_ratio, self.slope_cap, self.passed]
        return [_fmt(v) for v in vals]


def _norm_of(r: SweepRow, op: str) -> float:
    return r.norm_conjugated if op == "norm_conjugated" else r.norms[op]


def fit_slopes(rows: list) -> list:
    """Least-squares slope of log(norm/||sigma||) against log A2, rows with A2 >= 2.

    Flagged rows and vanishing norms (round-off of an exact zero, which has
    no logarithm) are left out of the fit.
    """
    out = []
    for op in Q_NAMES + ("norm_conjugated",):
        ratios = [
            _norm_of(r, op) / (r.sigma_norm * r.A2) for r in rows if r.status == "ok" and r.sigma_norm > 0
        ]
        pts = [
            (math.log(r.A2), math.log(_norm_of(r, op) / r.sigma_norm))
            for r in rows
            if r.status == "ok" and r.A2 >= FIT_MIN_A2 and r.sigma_norm > 0
            and _norm_of(r, op) > ZERO_NORM * r.sigma_norm
        ]
        if len(pts) >= 2:
            x, y = np.array(pts).T
            slope, intercept = np.polyfit(x, y, 1)
        else:
            slope = intercept = math.nan
        cap = SQRT_SLOPE_CAP if op in SQRT_TERMS else (SLOPE_CAP if op != "norm_conjugated" else math.inf)
        out.append(FitResult(op, len(pts), float(slope), float(intercept), max(ratios, default=0.0), cap))
    return out


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#000000")


def sweep_svg(rows: list, fits: list, width: int = 720, height: int = 480) -> str:
    """Log-log scatter of norm/||sigma|| against A2 with the fitted lines."""
    pts = [
        (r.A2, _norm_of(r, f.operator) / r.sigma_norm, i)
        for i, f in enumerate(fits)
        for r in rows
        if r.status == "ok" and r.sigma_norm > 0 and _norm_of(r, f.operator) > ZERO_NORM * r.sigma_norm
    ]
    pad = 60
    if not pts:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>\n'
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x0, x1 = min(lx), max(max(lx), min(lx) + 1e-9)
    y0, y1 = min(ly), max(max(ly), min(ly) + 1e-9)

    def X(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def Y(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    el = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle">log10 [w]_A2</text>',
        f'<text x="15" y="{height / 2:.0f}" transform="rotate(-90 15 {height / 2:.0f})" text-anchor="middle">log10 norm / sup|sigma|</text>',
    ]
    for v in (x0, x1):
        el.append(f'<text x="{X(v):.1f}" y="{height - pad + 15}" text-anchor="middle">{v:.2f}</text>')
    for v in (y0, y1):
        el.append(f'<text x="{pad - 5}" y="{Y(v):.1f}" text-anchor="end">{v:.2f}</text>')
    for a, b, i in pts:
        el.append(f'<circle cx="{X(math.log10(a)):.1f}" cy="{Y(math.log10(b)):.1f}" r="2.5" fill="{_PALETTE[i]}"/>')
    for i, f in enumerate(fits):
        if not math.isfinite(f.slope):
            continue
        xa, xb = max(x0, math.log10(FIT_MIN_A2)), x1
        # fit is in natural logs; slopes carry over, intercepts rescale
        ya = (f.intercept + f.slope * xa * math.log(10)) / math.log(10)
        yb = (f.intercept + f.slope * xb * math.log(10)) / math.log(10)
        el.append(
            f'<line x1="{X(xa):.1f}" y1="{Y(ya):.1f}" x2="{X(xb):.1f}" y2="{Y(yb):.1f}" stroke="{_PALETTE[i]}" stroke-width="1"/>'
        )
        el.append(f'<text x="{width - pad + 4}" y="{pad + 12 * i}" fill="{_PALETTE[i]}">{f.operator} {f.slope:.2f}</text>')
    el.append("</svg>")
    return "\n".join(el) + "\n"


# --- commands ------------------------------------------------------------------------


@dataclass
class CommandResult:
    ok: bool
    messages: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)  # name -> path
    data: object = None


def cmd_sweep(cfg: ExperimentConfig) -> CommandResult:
    weights = make_corpus(cfg)
    cfg.grid()
    make_sigma(cfg, weights[0].grid)  # surface a bad sigma before any work
    if cfg.jobs > 1:
        rows = _map(_sweep_job, [(cfg, i) for i in range(len(weights))], cfg.jobs)
    else:
        sigma = make_sigma(cfg, weights[0].grid)
        rows = [sweep_row(w, sigma, cfg.seed, cfg.tol, cfg.method) for w in weights]
    fits = fit_slopes(rows)
    out = Path(cfg.out)
    header = _header("sweep", cfg)
    _write_csv(out / "sweep.csv", header, SWEEP_COLUMNS, [r.row() for r in rows])
    _write_csv(out / "fit.csv", header, FIT_COLUMNS, [f.row() for f in fits])
    outputs = {"sweep": out / "sweep.csv", "fit": out / "fit.csv"}
    if cfg.svg:
        (out / "sweep.svg").write_text(sweep_svg(rows, fits))
        outputs["svg"] = out / "sweep.svg"
    msgs = [f"triangle inequality violated for {r.weight_id}" for r in rows if not r.triangle_ok]
    msgs += [f"fit {f.operator}: slope {f.slope:.4f}, max row ratio {f.max_row_ratio:.4f}" for f in fits]
    ok = all(r.triangle_ok for r in rows)
    return CommandResult(ok, msgs, outputs, (rows, fits))


def cmd_norms(cfg: ExperimentConfig) -> CommandResult:
    if cfg.weight:
        w = load_weight(cfg.weight)
    else:
        try:
            rec = WeightRecipe.parse(cfg.recipe) if cfg.recipe else WeightRecipe.make("constant", cfg.d, cfg.L, c=1.0)
            w = generate(rec)
        except (WeightError, GridError) as exc:
            raise UsageError(str(exc)) from None
        w.id = "w000"
    sigma = make_sigma(cfg, w.grid)
    row = sweep_row(w, sigma, cfg.seed, cfg.tol, cfg.method)
    out = Path(cfg.out)
    _write_csv(out / "norms.csv", _header("norms", cfg), SWEEP_COLUMNS + ("triangle_ok",), [row.row() + [row.triangle_ok]])
    msg = f"{w.id}: conjugated {row.norm_conjugated:.6g}, nine-term sum {sum(row.norms.values()):.6g}, triangle {'ok' if row.triangle_ok else 'VIOLATED'}"
    return CommandResult(row.triangle_ok, [msg], {"norms": out / "norms.csv"}, row)


def _audit_job(w):
    return audit_weight(w)


def cmd_audit(cfg: ExperimentConfig) -> CommandResult:
    weights = make_corpus(cfg)
    reports = _map(_audit_job, weights, cfg.jobs)
    rep = AuditReport()
    for r in reports:
        rep.extend(r)
    out = Path(cfg.out)
    header = _header("audit", cfg)
    outputs = {}
    for iid, recs in rep.by_id().items():
        p = out / "audit" / f"{iid}.csv"
        _write_csv(p, header, CSV_COLUMNS, [r.row() for r in recs])
        outputs[iid] = p
    _write_csv(out / "audit_summary.csv", header, CSV_COLUMNS, [r.row() for r in rep])
    maxima = []
    for iid, recs in rep.by_id().items():
        worst = max(recs, key=lambda r: r.ratio)
        maxima.append([iid, len(recs), _fmt(worst.ratio), _fmt(worst.cap), worst.weight_id, all(r.passed for r in recs)])
    _write_csv(out / "audit_max.csv", header, ("inequality_id", "n_weights", "max_ratio", "cap", "worst_weight", "passed"), maxima)
    outputs["summary"] = out / "audit_summary.csv"
    outputs["max"] = out / "audit_max.csv"
    fails = rep.failures()
    msgs = [f"{r.inequality_id} {r.weight_id}: ratio {r.ratio:.6g} above cap {r.cap:g}" for r in fails]
    return CommandResult(not fails, msgs, outputs, rep)


def cmd_verify(cfg: ExperimentConfig) -> CommandResult:
    extra = load_weight(cfg.weight) if cfg.weight else None  # load errors abort before any report
    cfg.grid()
    res = run_identity_suite(dims=(cfg.d,), n_cases=cfg.n_weights, seed=cfg.seed, tol=IDENTITY_TOL, L=cfg.L)
    failures = list(res.failures)
    if extra is not None:
        case = make_case(extra.grid.d, cfg.seed, extra.grid.L)
        case = replace(case, w=extra)
        for name, fn in CHECKS.items():
            if name in DENSE_CHECKS and extra.grid.n_cells > 4096:
                continue
            e = fn(case)
            res.max_errors[name] = max(res.max_errors.get(name, 0.0), e)
            if not e <= IDENTITY_TOL:
                failures.append((name, extra.grid.d, extra.id, e))
    rows = [[name, res.counts.get(name, 0), _fmt(err), not any(f[0] == name for f in failures)] for name, err in res.max_errors.items()]
    out = Path(cfg.out)
    header = _header("verify", cfg)
    _write_csv(out / "verify.csv", header, ("check", "cases", "max_error", "passed"), rows)
    _write_csv(out / "verify_failures.csv", header, ("check", "d", "case", "detail"), [[_fmt(x) for x in f] for f in failures])
    msgs = [f"{r[0]}: {r[1]} cases, max error {r[2]}" for r in rows] + [f"FAIL {f}" for f in failures]
    return CommandResult(not failures, msgs, {"verify": out / "verify.csv", "failures": out / "verify_failures.csv"}, res)


def cmd_generate(cfg: ExperimentConfig) -> CommandResult:
    weights = make_corpus(cfg)
    out = Path(cfg.out) / "weights"
    rows, bad = [], []
    for w in weights:
        p = out / f"{w.id}.txt"
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_step_function(w.base, p)
        except OSError as exc:
            raise UsageError(f"{p}: {exc.strerror}") from None
        back = read_step_function(p)
        if not np.array_equal(back.cells, w.cells):
            bad.append(w.id)
        rows.append([w.id, w.recipe.family, _fmt(w.a2), w.recipe.serialize(), p.name])
    _write_csv(Path(cfg.out) / "recipes.csv", _header("generate", cfg), ("weight_id", "family", "A2", "recipe", "file"), rows)
    msgs = [f"{len(weights)} weights written to {out}"] + [f"round trip mismatch: {b}" for b in bad]
    return CommandResult(not bad, msgs, {"recipes": Path(cfg.out) / "recipes.csv"}, weights)


COMMANDS = {"verify": cmd_verify, "audit": cmd_audit, "norms": cmd_norms, "sweep": cmd_sweep, "generate": cmd_generate}


# --- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="haarlab", description="Wilson-Haar paraproduct laboratory")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int, help="worker processes over corpus members")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.set:
        cfg = parse_config_text("\n".join(args.set), cfg, source="--set")
    for key in ("out", "seed", "d", "L", "tol", "jobs"):
        v = getattr(args, key)
        if v is not None:
            cfg = replace(cfg, **{key: v})
    if cfg.tol <= 0:
        raise UsageError("tol must be positive")
    if cfg.method not in ("auto", "dense", "power"):
        raise UsageError(f"unknown method {cfg.method!r}")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        res = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for m in res.messages:
        print(m)
    for name, path in res.outputs.items():
        log.info("wrote %s: %s", name, path)
    return 0 if res.ok else 1


if __name__ == "__main__":
    sys.exit(main())
