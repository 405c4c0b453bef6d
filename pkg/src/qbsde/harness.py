"""Experiment orchestration: convergence studies, the dimension-3 model table,
the alpha study, rate fitting and CSV/SVG output."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .backward import SchemeParams, solve
from .driver import TruncationPolicy
from .models import Problem, builtin

log = logging.getLogger(__name__)

CSV_HEADER = ("n", "h", "alpha", "truncation", "y0_scheme", "y0_reference", "abs_error", "rel_error",
              "runtime_ms", "diverged")
CAP_FACTOR = 10.0


class StudyError(RuntimeError):
    pass


@dataclass
class StudyConfig:
    """One study. `model` is a builtin name or a Problem.

    ``delta``/``kappa`` default to the model's registered lattice.
    ``truncation`` lists the modes to run ("adaptive", "fixed", "none");
    ``N``/``R`` are used by "fixed". Wall-clock times are only written to
    CSV when ``timings`` is set, so default output is byte-reproducible.
    """

    model: str | Problem
    n_list: list
    alpha: float = 0.25
    alpha_list: list | None = None
    M: int = 100
    delta: float | None = None
    kappa: int | None = None
    truncation: tuple = ("adaptive",)
    N: float | None = None
    R: float | None = None
    workers: int = 1
    csv_path: str | None = None
    plot_path: str | None = None
    timings: bool = False
    seed: int | None = None

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        if not self.n_list:
            raise ValueError("n_list is empty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError(f"n_list must be strictly increasing, got {self.n_list}")
        if isinstance(self.truncation, str):
            self.truncation = (self.truncation,)
        self.truncation = tuple(self.truncation)
        for mode in self.truncation:
            TruncationPolicy(mode, self.alpha, self.N, self.R)  # validates
        if isinstance(self.model, str):
            builtin(self.model)  # raises for unknown names

    @property
    def problem(self) -> Problem:
        return builtin(self.model) if isinstance(self.model, str) else self.model

    def lattice(self) -> tuple[float, int]:
        d, k = self.problem.lattice
        return (self.delta if self.delta is not None else d, self.kappa if self.kappa is not None else k)

    def params(self, n: int, mode: str, alpha: float | None = None) -> SchemeParams:
        delta, kappa = self.lattice()
        pol = TruncationPolicy(mode, self.alpha if alpha is None else alpha, self.N, self.R)
        return SchemeParams(n=n, truncation=pol, M=self.M, delta=delta, kappa=kappa, workers=self.workers)


@dataclass
class StudyRow:
    n: int
    h: float
    alpha: float
    truncation: str
    y0_scheme: float
    y0_reference: float
    abs_error: float | None
    rel_error: float | None
    runtime_ms: float | None
    diverged: bool


def is_diverged(y0: float, g_bound: float) -> bool:
    """Non-finite, or larger than CAP_FACTOR times sup |g|."""
    return not math.isfinite(y0) or abs(y0) > CAP_FACTOR * g_bound


def make_row(problem: Problem, params: SchemeParams, y_ref: float, *, timings: bool = False) -> StudyRow:
    res = solve(problem, params)
    div = res.diverged or is_diverged(res.y0, problem.g_bound)
    err = None if div else abs(res.y0 - y_ref)
    rel = None if div else err / abs(y_ref) if y_ref != 0 else None
    log.info("%s n=%d %s alpha=%g: y0=%.10g%s", problem.name, params.n, res.truncation, params.alpha,
             res.y0, " (diverged)" if div else "")
    return StudyRow(params.n, problem.T / params.n if params.n else math.nan, params.alpha, res.truncation,
                    res.y0, y_ref, err, rel, res.runtime_ms if timings else None, div)


@dataclass
class RateFit:
    rate: float | None  # positive for a decreasing error
    flag: str  # "ok" | "exact" | "insufficient"
    points: int


def fit_rate(rows: list[StudyRow], exact_tol: float = 1e-12) -> RateFit:
    """Least-squares slope of log(abs_error) against log(n), sign flipped.

    Raises
    ------
    StudyError
        If every row diverged.
    """
    ok = [r for r in rows if not r.diverged]
    if not ok:
        raise StudyError("all rows diverged; rate undefined")
    if all(r.abs_error <= exact_tol for r in ok):
        return RateFit(None, "exact", len(ok))
    pts = [(r.n, r.abs_error) for r in ok if r.abs_error > 0]
    if len(pts) < 2:
        return RateFit(None, "insufficient", len(pts))
    n, e = np.array(pts, dtype=float).T
    slope = np.polyfit(np.log(n), np.log(e), 1)[0]
    return RateFit(float(-slope), "ok", len(pts))


def _reference(problem: Problem) -> float:
    return problem.reference().y0


def run_convergence(config: StudyConfig) -> tuple[list[StudyRow], dict[str, RateFit]]:
    """One row per (n, mode) and a rate fit per mode; writes CSV/plot when paths are set."""
    p = config.problem
    y_ref = _reference(p)
    rows, rates = [], {}
    for mode in config.truncation:
        mrows = [make_row(p, config.params(n, mode), y_ref, timings=config.timings) for n in config.n_list]
        rows += mrows
        try:
            rates[mode] = fit_rate(mrows)
        except StudyError:
            rates[mode] = RateFit(None, "diverged", 0)
    _emit(rows, config, p)
    return rows, rates


def run_alpha_study(config: StudyConfig) -> dict[float, list[StudyRow]]:
    """Adaptive-truncation error profiles over n, one per alpha."""
    p = config.problem
    y_ref = _reference(p)
    alphas = config.alpha_list if config.alpha_list is not None else [config.alpha]
    profiles = {}
    for a in alphas:
        profiles[float(a)] = [make_row(p, config.params(n, "adaptive", a), y_ref, timings=config.timings)
                              for n in config.n_list]
    _emit([r for rs in profiles.values() for r in rs], config, p, by="alpha")
    return profiles


@dataclass
class ProfileSummary:
    final_error: float | None  # relative error at the largest n; None if it diverged
    min_error: float | None
    any_diverged: bool

    @property
    def turns_away(self) -> bool:
        """The profile diverged, or its final error is at least twice its best error."""
        if self.any_diverged or self.final_error is None:
            return True
        return self.min_error > 0 and self.final_error >= 2.0 * self.min_error


def summarize_profile(rows: list[StudyRow]) -> ProfileSummary:
    errs = [r.rel_error for r in rows if not r.diverged]
    last = rows[-1]
    return ProfileSummary(None if last.diverged else last.rel_error, min(errs) if errs else None,
                          any(r.diverged for r in rows))


@dataclass
class Table1Row:
    model: str
    truncation: str
    y0: float
    reference: float
    rel_error: float | None
    diverged: bool
    runtime_ms: float


TABLE1_MODELS = ("model_I", "model_II", "model_III", "model_IV")


def run_table1(n: int = 12, M: int = 100, alpha: float = 0.25, workers: int = 1, models=TABLE1_MODELS,
               modes=("adaptive", "none"), delta: float | None = None, kappa: int | None = None) -> list[Table1Row]:
    """Scheme value of every dimension-3 model with and without truncation."""
    out = []
    for name in models:
        p = builtin(name)
        y_ref = _reference(p)
        for mode in modes:
            cfg = StudyConfig(name, [n], alpha=alpha, M=M, delta=delta, kappa=kappa, truncation=(mode,),
                              workers=workers, timings=True)
            r = make_row(p, cfg.params(n, mode), y_ref, timings=True)
            out.append(Table1Row(name, mode, r.y0_scheme, y_ref, r.rel_error, r.diverged, r.runtime_ms))
    return out


def format_table1(rows: list[Table1Row]) -> str:
    lines = [f"{'model':<10} {'truncation':<10} {'y0':>14} {'reference':>10} {'rel_error':>10}"]
    for r in rows:
        err = "diverged" if r.diverged else f"{100 * r.rel_error:.2f}%"
        lines.append(f"{r.model:<10} {r.truncation:<10} {r.y0:>14.6g} {r.reference:>10.4f} {err:>10}")
    return "\n".join(lines)


def table1_csv(rows: list[Table1Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model", "truncation", "y0_scheme", "y0_reference", "rel_error", "diverged"))
    for r in rows:
        w.writerow((r.model, r.truncation, _fmt(r.y0), _fmt(r.reference),
                    "" if r.diverged else _fmt(r.rel_error), _fmt(r.diverged)))
    return buf.getvalue()


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def csv_text(rows: list[StudyRow]) -> str:
    if not rows:
        raise ValueError("no rows to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        vals = [getattr(r, f) for f in CSV_HEADER]
        if r.diverged:
            vals[CSV_HEADER.index("abs_error")] = vals[CSV_HEADER.index("rel_error")] = None
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in vals])
    return buf.getvalue()


def emit_csv(rows: list[StudyRow], path) -> None:
    Path(path).write_text(csv_text(rows))


def read_csv(path) -> list[StudyRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            v = dict(zip(header, rec))
            opt = {k: (float(v[k]) if v[k] != "" else None) for k in ("abs_error", "rel_error", "runtime_ms")}
            rows.append(StudyRow(int(v["n"]), float(v["h"]), float(v["alpha"]), v["truncation"],
                                 float(v["y0_scheme"]), float(v["y0_reference"]), opt["abs_error"],
                                 opt["rel_error"], opt["runtime_ms"], v["diverged"] == "1"))
    return rows


def _series_label(r: StudyRow, by: str) -> str:
    return f"alpha={r.alpha:g}" if by == "alpha" else r.truncation


def svg_text(rows: list[StudyRow], cap: float, by: str = "truncation", title: str = "") -> str:
    """Log-log plot of absolute error against n, one polyline per series.

    Diverged rows and errors above `cap` are drawn at `cap`.
    """
    if not rows:
        raise ValueError("no rows to plot")
    series: dict[str, list] = {}
    for r in rows:
        e = cap if r.diverged or r.abs_error is None else min(r.abs_error, cap)
        series.setdefault(_series_label(r, by), []).append((r.n, max(e, 1e-16)))
    W, H, ml, mr, mt, mb = 640, 440, 70, 160, 40, 50
    ns = [n for s in series.values() for n, _ in s]
    es = [e for s in series.values() for _, e in s]
    lx0, lx1 = math.log10(min(ns)), math.log10(max(ns))
    ly0, ly1 = math.floor(math.log10(min(es))), math.ceil(math.log10(max(es)))
    if lx1 == lx0:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    if ly1 == ly0:
        ly1 += 1

    def px(n):
        return ml + (math.log10(n) - lx0) / (lx1 - lx0) * (W - ml - mr)

    def py(e):
        return H - mb - (math.log10(e) - ly0) / (ly1 - ly0) * (H - mt - mb)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle">{title}</text>',
           f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>',
           f'<text x="{(ml + W - mr) / 2:.1f}" y="{H - 12}" text-anchor="middle">n</text>',
           f'<text x="16" y="{H / 2:.1f}" transform="rotate(-90 16 {H / 2:.1f})" text-anchor="middle">error</text>']
    for k in range(int(ly0), int(ly1) + 1):
        y = py(10.0**k)
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end">1e{k}</text>')
    for n in sorted(set(ns)):
        out.append(f'<text x="{px(n):.1f}" y="{H - mb + 16}" text-anchor="middle">{n}</text>')
    for i, (label, pts) in enumerate(series.items()):
        c = colors[i % len(colors)]
        coords = " ".join(f"{px(n):.2f},{py(e):.2f}" for n, e in pts)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"><title>{label}</title></polyline>')
        ly = mt + 18 * i
        out.append(f'<line x1="{W - mr + 12}" y1="{ly}" x2="{W - mr + 36}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{W - mr + 42}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(rows: list[StudyRow], path, cap: float, by: str = "truncation", title: str = "") -> None:
    Path(path).write_text(svg_text(rows, cap, by, title))


def _emit(rows, config: StudyConfig, problem: Problem, by: str = "truncation") -> None:
    if config.csv_path:
        emit_csv(rows, config.csv_path)
    if config.plot_path:
        emit_plot(rows, config.plot_path, CAP_FACTOR * problem.g_bound, by, problem.name)


def config_from_dict(d: dict) -> StudyConfig:
    names = {f.name for f in fields(StudyConfig)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return StudyConfig(**d)
