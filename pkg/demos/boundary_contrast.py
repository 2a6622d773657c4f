"""How often do paths come close to zero?

A Feller diffusion without immigration dies with probability
``exp(-x / (c T))`` by time ``T``; the stable root process with power-law
immigration never reaches the boundary. The table shows the fraction of
paths whose minimum falls below each level.

Run: ``python3 demos/boundary_contrast.py``
"""
import math
from pathlib import Path

from cbi.paramfile import load_params
from cbi.simulate import SimConfig, boundary_stats, run_ensemble

HERE = Path(__file__).parent
DELTAS = [0.1, 1e-2, 1e-3]


def main():
    cfg = SimConfig(T=5.0, h=1e-2, eps=1e-2, n_paths=300, seed=3)
    feller = load_params(HERE / "params" / "feller_no_immigration.toml")
    root = load_params(HERE / "params" / "alpha_root.toml")

    rows = {
        "feller": boundary_stats(run_ensemble(feller, [1.0], cfg), 0, DELTAS),
        "stable root": boundary_stats(run_ensemble(root, [1.0, 1.0], cfg), 0, DELTAS),
    }
    print("delta      " + "  ".join(f"{d:>7g}" for d in DELTAS))
    for name, fr in rows.items():
        print(f"{name:<11}" + "  ".join(f"{v:7.3f}" for v in fr))
    print(f"feller extinction by T: {math.exp(-1.0 / (1.0 * cfg.T)):.3f}")


if __name__ == "__main__":
    main()
