from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from henon import HenonMap  # noqa: E402
from poly1d import Poly1D  # noqa: E402


@pytest.fixture
def p_escape() -> Poly1D:
    """z² − 6: the critical orbit escapes, Julia set is a Cantor set."""
    return Poly1D((-6, 0, 1))


@pytest.fixture
def horseshoe() -> HenonMap:
    return HenonMap.single(0.2, (-6, 0, 1))


@pytest.fixture
def degenerate_limit() -> HenonMap:
    """(z² − 6, 0)."""
    return HenonMap.single(0, (-6, 0, 1))
