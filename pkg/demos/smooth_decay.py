"""Small gKP I run in the dispersive regime.

Integrates n = 4/3, beta = 1 on a 256x128 grid and prints how the sup norm
and the conservation indicators evolve.  Takes a few seconds.
"""

from gkpsim import GkpParams, Grid2D, InitialData, run_direct

grid = Grid2D(256, 128, 10.0, 4.0)
params = GkpParams.from_steps(4, 3, -1, grid, n_steps=200, t_end=0.2)
result = run_direct(params, InitialData(beta=1.0))

print(f"finished: {result.reason}")
print(f"{'t':>6} {'sup|u|':>10} {'|u_y|_2':>10} {'d_mass':>10} {'d_energy':>10}")
for rec in result.records[::25]:
    print(f"{rec.t:6.3f} {rec.linf_u:10.5f} {rec.l2_uy:10.5f} {rec.delta_mass:10.2e} {rec.delta_energy:10.2e}")
