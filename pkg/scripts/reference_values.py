"""Print closed-form reference values and quadrature self-checks for every builtin model."""

import argparse
import time
from dataclasses import dataclass

from qbsde.models import BUILTIN_NAMES, builtin
from qbsde.oracle import quadrature_self_check, reference_y0


@dataclass
class Config:
    models: tuple = BUILTIN_NAMES
    nodes: int = 64


def main(cfg: Config) -> None:
    for name in cfg.models:
        p = builtin(name)
        spec = p.reference_spec(cfg.nodes)
        t0 = time.perf_counter()
        _, _, gap = quadrature_self_check(spec)
        ref = reference_y0(spec)
        print(f"{name:10s} y0 {ref.y0:.8f}  method {ref.method:12s} gap {ref.gap:.2e}  "
              f"{cfg.nodes}/{2 * cfg.nodes}-node gap {gap:.2e}  {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", nargs="*", default=list(BUILTIN_NAMES))
    ap.add_argument("--nodes", type=int, default=64)
    a = ap.parse_args()
    main(Config(tuple(a.models), a.nodes))
