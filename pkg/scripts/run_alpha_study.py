"""Error profiles over n on the one-dimensional model for several truncation exponents alpha."""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from qbsde.harness import StudyConfig, emit_csv, emit_plot, CAP_FACTOR, run_alpha_study, summarize_profile
from qbsde.models import builtin


@dataclass
class Config:
    model: str = "d1_alpha"
    n_list: list = field(default_factory=lambda: [10, 20, 30, 50, 75, 100, 150, 200, 250])
    alphas: list = field(default_factory=lambda: [0.0, 0.125, 0.25, 0.375, 0.625])
    M: int = 100
    delta: float | None = None
    kappa: int | None = None
    out_dir: str = "results"


def main(cfg: Config) -> None:
    study = StudyConfig(cfg.model, cfg.n_list, M=cfg.M, alpha_list=cfg.alphas, delta=cfg.delta, kappa=cfg.kappa)
    profiles = run_alpha_study(study)
    rows = [r for a in cfg.alphas for r in profiles[a]]
    for a in cfg.alphas:
        s = summarize_profile(profiles[a])
        final = "diverged" if s.final_error is None else f"{s.final_error:.3e}"
        print(f"alpha={a:<6g} final rel. error {final:>10s}  best {s.min_error:.3e}  turns away {s.turns_away}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    stem = Path(cfg.out_dir) / f"alpha_{cfg.model}"
    emit_csv(rows, f"{stem}.csv")
    emit_plot(rows, f"{stem}.svg", CAP_FACTOR * builtin(cfg.model).g_bound, by="alpha", title=cfg.model)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-list", type=int, nargs="*", default=Config().n_list)
    ap.add_argument("--alphas", type=float, nargs="*", default=Config().alphas)
    ap.add_argument("--M", type=int, default=100)
    ap.add_argument("--delta", type=float)
    ap.add_argument("--kappa", type=int)
    ap.add_argument("--out-dir", default="results")
    a = ap.parse_args()
    main(Config(n_list=a.n_list, alphas=a.alphas, M=a.M, delta=a.delta, kappa=a.kappa, out_dir=a.out_dir))
