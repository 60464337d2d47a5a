import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bgpbt.search_space import DimensionSpec, SearchSpace, mixed_benchmark_space, ppo_space  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def random_mixed_space(rng: np.random.Generator, max_dims: int = 15) -> SearchSpace:
    """Random space with 1..max_dims dims drawn from all three kinds."""
    n = int(rng.integers(1, max_dims + 1))
    dims = []
    for i in range(n):
        kind = rng.choice(["continuous", "ordinal", "categorical"])
        if kind == "continuous":
            dims.append(DimensionSpec.continuous(f"d{i}", 0.0, 1.0))
        elif kind == "ordinal":
            dims.append(DimensionSpec.integer(f"d{i}", 0, int(rng.integers(1, 8))))
        else:
            dims.append(DimensionSpec.categorical(f"d{i}", list(range(int(rng.integers(2, 5))))))
    return SearchSpace(dims)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mixed_space():
    return mixed_benchmark_space()


@pytest.fixture
def ppo():
    return ppo_space()


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured detail."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            name = props.get("criterion", rep.nodeid.split("::")[-1])
            status = "PASS" if outcome == "passed" else "FAIL"
            lines.append((name, f"{status} {name}: {props.get('detail', '')}".rstrip(": ")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda item: int(item[0][1:]) if item[0][1:].isdigit() else 99):
            terminalreporter.write_line(line)
