"""Derivation of independent, labeled random streams from one root seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(root)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(root, label)))
