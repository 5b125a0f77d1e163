import numpy as np
import pytest

from lbdrec.dataio import MOVIELENS_100K, RatingDataset

# one line per acceptance criterion, echoed in the terminal summary
VERDICTS = []


@pytest.fixture
def verdict():
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_dataset():
    """30 ratings from 6 users on 5 items, every user and item present."""
    rng = np.random.default_rng(0)
    users = np.concatenate([np.arange(6), rng.integers(0, 6, 24)])
    items = np.concatenate([np.arange(5), [0], rng.integers(0, 5, 24)])
    ratings = rng.integers(0, 5, 30)
    return RatingDataset(users, items, ratings, MOVIELENS_100K)


@pytest.fixture
def planted_small():
    """A learnable 20 x 20 dataset: ratings follow a rank-2 score plus noise."""
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
    users, items = np.meshgrid(np.arange(20), np.arange(20), indexing="ij")
    users, items = users.ravel(), items.ravel()
    score = 3.0 + 1.2 * np.einsum("ij,ij->i", u[users], v[items]) + rng.normal(0, 0.3, users.size)
    ratings = np.clip(np.rint(score - 1), 0, 4).astype(int)
    return RatingDataset(users, items, ratings, MOVIELENS_100K)
