"""
Why more time sub-intervals pay off.

With the average density N_avg fixed and n_I * n_T fixed, doubling n_I
doubles the vertices per mesh, while each mesh only has to cover the part
of the domain the front sweeps during a shorter sub-interval. The exact
solution is reinterpolated at every interval start so that only the
spatial error is measured.

Run with ``python3 demos/04_more_intervals.py`` (under a minute).
"""
from transient_adapt import FixedPointConfig, convergence_study

base = FixedPointConfig(n_I=2, n_T=64, N_avg=4000, n_fp=3, delta=0.1, nx=64, ny=32,
                        cancel_transfer_error=True)
study = convergence_study("fixed-Navg", base, [2, 4, 8], progress=print)
print(study.summary_text())
print(f"fitted rate r (E ~ N_st^(-r/2)): {study.rate:.2f}")
