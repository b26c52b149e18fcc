import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(seed, d=5, per=30):
    """Three unit-radius balls whose centres are 10 apart."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, d))
    centers[1, 0] = 10.0
    centers[2, :2] = [5.0, 8.66]
    pts = []
    for c in centers:
        u = rng.standard_normal((per, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts.append(c + u * rng.uniform(0, 1, (per, 1)) ** (1 / d))
    return np.vstack(pts)


def random_simplex(rng, n, size=None):
    return rng.dirichlet(np.ones(n), size=size)


ACCEPTANCE = {
    "ac01": "gradient correctness",
    "ac02": "DBSCAN closure oracle",
    "ac03": "t-SNE blob recovery",
    "ac04": "trading conservation",
    "ac05": "wealth identity",
    "ac06": "metrics oracle",
    "ac07": "loss oracles",
    "ac08": "A3C smoke",
    "ac09": "DDPG smoke",
    "ac10": "baseline sanity",
    "ac11": "end-to-end reproducibility",
}


def pytest_terminal_summary(terminalreporter):
    seen = {}
    for status in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            name = getattr(rep, "nodeid", "").rsplit("::", 1)[-1]
            if not name.startswith("test_ac") or rep.when not in ("call", "setup"):
                continue
            key = name[5:9]
            if status == "passed" and rep.when != "call":
                continue
            seen[key] = ("PASS" if status == "passed" else "FAIL", rep.duration)
    if not seen:
        return
    terminalreporter.section("acceptance")
    for key, label in ACCEPTANCE.items():
        if key in seen:
            verdict, secs = seen[key]
            terminalreporter.write_line(f"{verdict}  {key.upper()} {label} ({secs:.1f}s)")
