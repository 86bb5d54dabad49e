# Worked numbers for the two-mode planar system in configs/: constants,
# the parameter condition and rates of both design cases, a short rate
# sweep, and one closed-loop run per case with its trace plot.
#
#   python analysis/rate_example.py [outdir]

import os
import sys

import numpy as np

from slsq import design, experiments, plot
from slsq.design import SearchTargets
from slsq.system import system_constants, verify_certificate_lognorm

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, "..", "configs")


def show_constants(exp):
    c = system_constants(exp.sys, exp.fb)
    print(f"nu = {c.nu:.4f}  Delta1 = {c.delta1:.4f}  Delta2 = {c.delta2:.4f}  L = {c.L:.4f}")
    print(f"Delta1 + Delta2 L = {c.delta1 + c.delta2 * c.L:.4f}")
    chk = verify_certificate_lognorm(exp.sys, exp.fb, exp.cert)
    print(f"log-norm certificate: {chk.status}  (margins {np.round(chk.margins, 4)})")


def show_case(name, exp):
    dc = design.derived_constants(exp.cfg)
    cfg = exp.cfg
    print(f"--- {name}: tau_a={cfg.tau_a} tau_s={cfg.tau_s} n={cfg.n} alpha={cfg.alpha}")
    print(f"  psi={dc.psi:.5f} alpha_bar={dc.alpha_bar:.6f} eps_bar={dc.eps_bar:.6f} eps_n={dc.eps_n:.5f}")
    print(f"  lhs={dc.rho_bar:.4f} rhs={dc.rhs:.4f}  m_hat={dc.m_hat}")
    print(f"  R = {dc.rate:.2f} bits/time  mu = {dc.mu:.4f}  lambda = {dc.lam:.4f}")


def run_case(name, exp, outdir):
    sig, trace, rep = experiments.run_experiment(exp, exp.seed)
    print(rep.summary())
    print(f"  empirical rate {trace.empirical_rate():.2f} bits/time over {trace.full_blocks} blocks")
    path = os.path.join(outdir, f"{name}.svg")
    plot.plot_trace(trace, path, title=name)
    print(f"  wrote {path}")


if __name__ == "__main__":
    outdir = sys.argv[1] if len(sys.argv) > 1 else "out/rate_example"
    os.makedirs(outdir, exist_ok=True)

    cases = {
        "case1": experiments.load_experiment(os.path.join(CONFIGS, "sectionV_case1.json")),
        "case2": experiments.load_experiment(os.path.join(CONFIGS, "sectionV_case2.json")),
    }
    show_constants(cases["case1"])
    for name, exp in cases.items():
        show_case(name, exp)

    exp = cases["case1"]
    targets = SearchTargets(d=exp.sys.d, mode_count=exp.sys.N, r0=exp.cfg.r0)
    table = design.rate_sweep(system_constants(exp.sys, exp.fb), exp.cert, [0.25, 0.5, 1.0, 2.0, 4.0], targets)
    print("--- searched rate vs tau_a")
    for row in table:
        print(f"  tau_a={row['tau_a']:<5g} n={row['n']:<5d} tau_s={row['tau_s']:<7g} "
              f"alpha={row['alpha']:<9g} R={row['rate']:.1f}")

    for name, exp in cases.items():
        run_case(name, exp, outdir)
