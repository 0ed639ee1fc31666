"""Build identifier and master-seed derivation shared by every entry point."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__

# Component codes for seed derivation; changing them changes every run.
SEED_COMPONENTS = {"env": 1, "torch": 2, "sampling": 3, "eval": 4, "terrain": 5}


def derive_seed(master: int, component: str) -> int:
    """Independent 32-bit seed for ``component`` from one master seed."""
    code = SEED_COMPONENTS[component]
    return int(np.random.SeedSequence([int(master) & 0xFFFFFFFF, code]).generate_state(1)[0])


@lru_cache(maxsize=1)
def build_id() -> str:
    """Package version plus a digest of the package sources."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.suffix in (".py", ".yaml") and "__pycache__" not in p.parts:
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"
