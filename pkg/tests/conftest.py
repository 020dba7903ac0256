import numpy as np
import pytest

from cluspath.core import Dataset, HyperParams, Prototype, from_records


def random_dataset(seed: int, p: int = 10, n_obs: int = 8, dim: int = 4, jitter: bool = True) -> Dataset:
    """p entities with n_obs observations each at (possibly jittered) integer times."""
    rng = np.random.default_rng(seed)
    records = []
    for e in range(p):
        times = np.arange(n_obs, dtype=float)
        if jitter:
            times = times + rng.uniform(-0.3, 0.3, n_obs)
        drift = rng.normal(size=dim)
        for t in times:
            records.append((f"p{e}", float(t), (drift * t / n_obs + rng.normal(scale=0.5, size=dim)).tolist()))
    return from_records(records)


def random_params(rng: np.random.Generator, k: int, beta_scale: float = 1.0) -> HyperParams:
    return HyperParams(
        alpha=float(rng.uniform(-1, 1)),
        beta=float(rng.uniform(0, beta_scale)),
        delta=float(rng.uniform(0.5, 4)),
        lambda1=float(rng.uniform(0.1, 2)),
        lambda2=float(rng.uniform(0, 2)),
        lambda3=float(rng.uniform(0, 2)),
        k=k,
    )


def random_adjacency(rng: np.random.Generator, k: int) -> np.ndarray:
    a = rng.uniform(0, 1, (k, k))
    np.fill_diagonal(a, 0.0)
    return a / a.sum()


def random_prototypes(rng: np.random.Generator, ds: Dataset, k: int) -> list[Prototype]:
    idx = rng.choice(ds.n, size=k, replace=False)
    return [Prototype(float(ds.times[i] + rng.normal(scale=0.2)), tuple(ds.X[i] + rng.normal(scale=0.2, size=ds.dim)))
            for i in idx]


@pytest.fixture
def small_ds() -> Dataset:
    return random_dataset(0, p=4, n_obs=5, dim=2)


def ari(a, b) -> float:
    from sklearn.metrics import adjusted_rand_score

    return float(adjusted_rand_score(a, b))


# (criterion, status, detail) lines collected by the acceptance module
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"criterion {name:>2}: {status}  {detail}")
