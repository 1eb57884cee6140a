"""Named random substreams derived from one master seed."""

import zlib

import numpy as np

STREAMS = ("alice-settings", "bob-settings", "source", "eve", "hash", "reconcile")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for the stream `name` under master `seed`.

    Streams are keyed by a hash of their name, so adding a new consumer
    never shifts the draws seen by existing ones.
    """
    key = [int(seed), zlib.crc32(name.encode("utf-8")), *(int(e) for e in extra)]
    return np.random.default_rng(np.random.SeedSequence(key))


def session_streams(seed: int, *extra: int) -> dict[str, np.random.Generator]:
    return {name: substream(seed, name, *extra) for name in STREAMS}
