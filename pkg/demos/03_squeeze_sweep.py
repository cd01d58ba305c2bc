"""
Sweeping the squeezing strength
===============================

The Duan product falls as 2 exp(-2r), crossing 1 at r = ln(2)/2.
"""

import math

import numpy as np

from eprsim.experiments import EprExperimentConfig, sweep_csv, sweep_squeeze

rows = sweep_squeeze(list(np.arange(0, 3.01, 0.5)), EprExperimentConfig(shots=50_000, seed=3))
print(sweep_csv(rows))

print("threshold r", math.log(2) / 2)
