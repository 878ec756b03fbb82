"""Rate loss when the phases are known only within +-delta_max.

The bound is the worst case over a grid of phase tuples inside the
allowed intervals. At delta_max = 0 it reduces to the fully characterized
source.
"""

from decoy_sdp.keyrate import ScenarioConfig, evaluate_point
from decoy_sdp.partial import PartialCharSpec
from decoy_sdp.phase import make_discrete

CUTOFF = 10
N = 3

for delta in (0.0, 1e-2, 1e-1):
    cfg = ScenarioConfig(
        make_discrete(N),
        mode="partial_char",
        partial=PartialCharSpec(N, delta),
        cutoff=CUTOFF,
        s_points=8,
        refine_iters=3,
    )
    point = evaluate_point(cfg, 10.0, CUTOFF)
    print(f"delta_max = {delta:<6g} R(10 dB) = {point.rate:.4e}  s = {point.intensities[0]:.3f}")
