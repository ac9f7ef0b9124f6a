"""Error against the number of vanishing boundary derivatives N.

For each N the schedule is smooth_poly(N) and T is the theorem time at q = 2.
Prints the measured error next to the bound and the fitted decay rate.
"""

import sys

from adiabound.harness import ExperimentConfig, fit_decay, run_sweep


def main(out="results/n_sweep"):
    cfg = ExperimentConfig(hamiltonian={"builtin": "x-to-z", "n": 2}, schedule={"family": "smooth_poly", "Nb": 1},
                           sweep={"variable": "N", "values": [1, 2, 3, 4, 5]}, q=2.0, tol=1e-8, workers=4)
    res = run_sweep(cfg, out=out)
    print(f"{'N':>2} {'JT':>10} {'delta':>10} {'bound':>10}")
    for r in res.rows:
        print(f"{r['N']:>2} {r['JT']:>10.1f} {r['delta_measured']:>10.2e} {r['delta_bound']:>10.2e}")
    fit = fit_decay(res.rows, "N", floor=0.0)
    print(f"ln(delta) slope {fit.slope:.2f} (95% CI {fit.ci95[0]:.2f} .. {fit.ci95[1]:.2f}); -ln 2 = -0.69")
    print(f"rows written to {res.csv_path}")


if __name__ == "__main__":
    main(*sys.argv[1:])
