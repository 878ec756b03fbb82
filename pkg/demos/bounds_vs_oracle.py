"""Certified single-photon bounds next to the exact values of a lossy channel.

For each source the SDP engine sees only the observed gains and error rates.
Its lower yield bound and upper phase-error bound must bracket the values
computed directly from the channel model.
"""

from decoy_sdp.channel import ChannelParams, observed_statistics, oracle_phase_error, oracle_yield
from decoy_sdp.fock import source_spectrum
from decoy_sdp.phase import make_discrete, make_uniform
from decoy_sdp.sdp import compute_bounds

CUTOFF = 12
GAMMA_DB = 20.0
S = 0.1

ch = ChannelParams(GAMMA_DB)
intensities = (S, S / 5, 0.0)
print(f"loss {GAMMA_DB:g} dB, intensities {intensities}")
print(f"{'source':>8} {'Y1 bound':>12} {'Y1 exact':>12} {'e1 bound':>10} {'e1 exact':>10}")
for name, dist in (("N=2", make_discrete(2)), ("N=4", make_discrete(4)), ("uniform", make_uniform())):
    specs = [source_spectrum(mu, dist, CUTOFF) for mu in intensities]
    b = compute_bounds(specs, observed_statistics(intensities, ch))
    phi = specs[0].eigenvector(1)
    print(
        f"{name:>8} {b.yield_lower[1]:12.5e} {oracle_yield(phi, ch):12.5e}"
        f" {b.phase_error_upper[1]:10.4f} {oracle_phase_error(phi, ch):10.4f}"
    )
