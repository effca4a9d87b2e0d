import random

import pytest

from mootbench.data import load_table


def pytest_addoption(parser):
    parser.addoption(
        "--live-smoke",
        action="store_true",
        default=False,
        help="run the live endpoint smoke test (needs MOOTBENCH_ENDPOINT, "
        "MOOTBENCH_MODEL and the API key env var)",
    )

# The configuration dataset used throughout: three numeric inputs, one
# goal to maximize and one to minimize.
STORM_CSV = """Spout_wait,Spliters,Counters,Throughput+,Latency-
10,6,17,23075,158.68
8,6,17,22887,172.74
9,6,17,22799,156.83
9,3,17,22430,160.14
10000,1,10,460.81,8761.6
10000,1,18,402.53,8797.5
10000,1,12,365.07,9098.9
10000,1,1,310.06,9421
"""


@pytest.fixture
def storm():
    return load_table(STORM_CSV, name="storm")


@pytest.fixture
def storm_labeled(storm):
    for row in storm.rows:
        row.labeled = True
    return storm


def smooth_csv(name: str, rows: int, x_dims: int, goals: int = 2, seed: int = 0) -> str:
    """Synthetic MOOT-style dataset: uniform x in [0,1]^d, each goal the
    squared distance to a random center (minimized), so the landscape is
    smooth and mean-of-good-points interpolation helps."""
    rng = random.Random(seed)
    centers = [[rng.random() for _ in range(x_dims)] for _ in range(goals)]
    header = [f"X{i}" for i in range(x_dims)] + [f"G{g}-" for g in range(goals)]
    lines = [",".join(header)]
    for _ in range(rows):
        x = [rng.random() for _ in range(x_dims)]
        ys = [
            sum((xi - ci) ** 2 for xi, ci in zip(x, center)) / x_dims
            for center in centers
        ]
        lines.append(",".join([f"{v:.6f}" for v in x] + [f"{v:.8f}" for v in ys]))
    return "\n".join(lines) + "\n"


def uniform_goal_csv(name: str, rows: int, seed: int = 0) -> str:
    """One minimize goal drawn uniformly, so pool scores are ~U(0,1)."""
    rng = random.Random(seed)
    lines = ["X0,G0-"]
    for _ in range(rows):
        lines.append(f"{rng.random():.6f},{rng.random():.6f}")
    return "\n".join(lines) + "\n"
