"""Seed derivation helpers.

Every random draw in the package flows through a Philox counter-based bit
generator keyed by ``(seed, stream)`` pairs.  Philox is stateless-per-counter,
so the same key reproduces the same stream on any platform and any execution
order, which is what makes parallel and serial runs bit-identical.

Stream ids are small integers namespaced per module (see ``STREAMS``).
Derivation rule: ``Generator(Philox(key=SeedSequence((seed, stream, index))))``
where ``index`` distinguishes parallel work items (permutation number, tree
number, ...).
"""

from __future__ import annotations

import numpy as np

# Stable stream ids; never renumber, append only.
STREAMS = {
    "split": 1,
    "permutation": 2,
    "regions": 3,
    "sar": 4,
    "features": 5,
    "noise": 6,
    "model": 7,
    "tree": 8,
    "shuffle": 9,
    "init": 10,
}


def generator(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Return the Philox generator for a (seed, stream, index) triple."""
    if stream not in STREAMS:
        raise KeyError(f"unknown RNG stream {stream!r}")
    ss = np.random.SeedSequence((int(seed), STREAMS[stream], int(index)))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def stage_seed(master_seed: int, stage: str) -> int:
    """Derive a per-stage seed from the pipeline master seed.

    The derivation is a fixed hash of the stage name so that running a stage
    standalone or inside the full pipeline yields the same stream.
    """
    name_code = int.from_bytes(stage.encode("utf-8")[:8].ljust(8, b"\0"), "big")
    ss = np.random.SeedSequence((int(master_seed), name_code))
    return int(ss.generate_state(1, np.uint64)[0] % np.uint64(2**63))
