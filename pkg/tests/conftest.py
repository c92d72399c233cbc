import functools
from pathlib import Path
import sys

import pytest

HERE = Path(__file__).resolve().parent
FIXTURES = HERE / "fixtures"
sys.path.insert(0, str(HERE))

from evmfix.analysis import analyze_bundle  # noqa: E402
from evmfix.program import load_bundle  # noqa: E402

# the stress fixture is analyzed separately with a short timeout
SLOW = {"explode"}


def fixture_names(role=None):
    out = []
    for p in sorted(FIXTURES.glob("*.json")):
        if p.stem in SLOW:
            continue
        if role is None or load(p.stem).meta.get("role") == role:
            out.append(p.stem)
    return out


@functools.lru_cache(maxsize=None)
def load(name):
    return load_bundle(FIXTURES / f"{name}.json")


@functools.lru_cache(maxsize=None)
def analysis(name):
    return analyze_bundle(load(name), timeout=60)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
