"""Convergence in n for the two-dimensional models, with and without truncation.

Writes one CSV and one SVG log-log plot per model.
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from qbsde.harness import StudyConfig, run_convergence


@dataclass
class Config:
    models: tuple = ("d2_fig1", "d2_fig2")
    n_list: list = field(default_factory=lambda: [5, 10, 20, 40])
    M: int = 100
    alpha: float = 0.25
    workers: int = 1
    out_dir: str = "results"


def main(cfg: Config) -> None:
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    for name in cfg.models:
        stem = Path(cfg.out_dir) / f"convergence_{name}"
        study = StudyConfig(name, cfg.n_list, alpha=cfg.alpha, M=cfg.M, truncation=("adaptive", "none"),
                            workers=cfg.workers, csv_path=f"{stem}.csv", plot_path=f"{stem}.svg")
        rows, rates = run_convergence(study)
        for r in rows:
            err = "diverged" if r.diverged else f"{r.rel_error:.4%}"
            print(f"{name} n={r.n:3d} {r.truncation:8s} y0={r.y0_scheme:.6g} rel. error {err}")
        for mode, fit in rates.items():
            print(f"{name} {mode}: rate {fit.rate} ({fit.flag})")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", nargs="*", default=list(Config.models))
    ap.add_argument("--n-list", type=int, nargs="*", default=[5, 10, 20, 40])
    ap.add_argument("--M", type=int, default=100)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    a = ap.parse_args()
    main(Config(tuple(a.models), a.n_list, a.M, workers=a.workers, out_dir=a.out_dir))
