"""Dimension-3 models at fixed n, with adaptive truncation and without truncation."""

import argparse
from dataclasses import dataclass
from pathlib import Path

from qbsde.harness import format_table1, run_table1, table1_csv


@dataclass
class Config:
    n: int = 12
    M: int = 100
    alpha: float = 0.25
    workers: int = 1
    out: str = "results/table1.csv"


def main(cfg: Config) -> None:
    rows = run_table1(n=cfg.n, M=cfg.M, alpha=cfg.alpha, workers=cfg.workers)
    print(format_table1(rows))
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.out).write_text(table1_csv(rows))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in vars(Config()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    main(Config(**vars(ap.parse_args())))
