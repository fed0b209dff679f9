"""Named, seedable random streams.

Every stochastic subsystem draws from its own counter-based Philox stream,
keyed by the scenario seed and a stream name.  Streams are mutually
independent, so adding or removing draws in one subsystem never perturbs
another, and a run is reproducible from (seed, stream name) alone.

Stream names in use:

    turbulence.wander      fast 2-axis beam wander
    turbulence.scint       transmittance fluctuation
    plant.chromatic        slow chromatic-offset walk
    plant.psd              PSD anode voltage noise
    netlink.channel        wireless-bridge latency and loss
    photonics.pairs        SPDC pair and singles emission
    photonics.channel      signal-arm thinning, jitter, and background
    photonics.idler        idler-arm detection
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream `name` under scenario `seed`."""
    digest = hashlib.blake2b(
        name.encode("utf-8") + int(seed).to_bytes(16, "little", signed=True),
        digest_size=16,
    ).digest()
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=key))
