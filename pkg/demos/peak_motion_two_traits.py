"""Where does a concentrated population move in a two-trait space?

Runs the two bundled two-trait scenarios that differ only in the shape of
the initial bump: an anisotropic bump (tight in one trait, loose in the
other) and an isotropic one. The peak velocity is the gradient of the
growth rate preconditioned by the inverse curvature of the bump, so the
anisotropic population climbs the same fitness gradient along a *different*
path: mutation-rich directions move faster.

Run:  python3 demos/peak_motion_two_traits.py
"""

import numpy as np

from concentra.pde import run_simulation
from concentra.scenarios import load_bundled


def run(name):
    sc = load_bundled(name)
    result = run_simulation(sc.build_config(), sc.build_model(),
                            sc.build_grid(), sc.u0, probes=sc.probes,
                            constants=sc.build_constants())
    return sc, result


def main():
    for name in ("scenario1_isotropic", "scenario1_anisotropic"):
        sc, result = run(name)
        pts = result.trajectory.points
        off = np.abs(pts[:, 0] - pts[:, 1])
        print(f"\n=== {name} ===")
        print(f"  start  {pts[0].round(4)}")
        for step in (20, 40, 60, 80):
            print(f"  step {step:3d}  peak {pts[step].round(4)}  "
                  f"off-diagonal {off[step]:.4f}")
        print(f"  max off-diagonal distance: {off.max():.4f}")
    print("\nThe isotropic bump tracks the diagonal at first; the "
          "anisotropic bump\nveers toward the loosely-constrained trait "
          "immediately. Late in the run\nboth peaks are captured by the "
          "domain corner, where the (unbounded)\ngrowth law is largest -- "
          "a reminder that the truncated box is part of\nthe model.")


if __name__ == "__main__":
    main()
