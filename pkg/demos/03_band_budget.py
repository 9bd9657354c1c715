"""
How many hopping bands are worth paying for
===========================================

Capping the carved bits at ``kappa`` limits the dictionary to ``2**kappa``
bands. The key-rate climbs and saturates; key-rate per carved bit peaks at an
intermediate budget.
"""

import numpy as np

from relaykey import ChannelParams, OptimizationConfig, Solver, grid_search, sweep_kappa
from relaykey.experiments import consensus_curve

channel = ChannelParams.from_snr_db(20.0, c_ar=0.5)
_, model = consensus_curve(channel, [round(0.1 * i, 1) for i in range(1, 10)], 1e-3,
                           lambda i: np.random.default_rng([3, i]))
config = OptimizationConfig(epsilon=1e-2)

unbounded = grid_search(model, channel, config)
print(f"unbounded key-rate {unbounded.key_rate:.4f}")
for kappa, res, se in sweep_kappa(model, channel, config, range(1, 17), solver=Solver.Grid):
    bar = "#" * int(400 * se)
    print(f"kappa={kappa:2d}  key-rate {res.key_rate:.4f}  per-bit {se:.4f} {bar}")
