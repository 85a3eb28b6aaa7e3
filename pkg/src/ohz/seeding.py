"""Deterministic seed derivation so one global seed reproduces a whole run."""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, stage: str) -> int:
    """Mix a global seed with a stage name into an independent 32-bit seed.

    Every seeded subsystem (shuffle order, shot selection, perturbations,
    test subset choice) derives its own stream this way, so runs repeat
    bit-exactly from a single ``--seed`` flag.
    """
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
