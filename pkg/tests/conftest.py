import numpy as np
import pytest

from asymflow.spaces import EuclideanSpace, FunkBall, MinkowskiSpace, RandersSpace, quartic_norm

DRIFT = (0.3, 0.1)


def funk_literal(x1, x2):
    """Textbook Funk distance from inner products only (no exit-length trick)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    w = x2 - x1
    if not np.any(w):
        return 0.0
    root = np.sqrt(w @ w - ((x1 @ x1) * (x2 @ x2) - (x1 @ x2) ** 2))
    return float(np.log((root - x1 @ w) / (root - x2 @ w)))


def hilbert_cross_ratio(x, y):
    """Half log cross ratio of x, y with the chord endpoints a, b (order a, x, y, b)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = y - x
    if not np.any(w):
        return 0.0
    # |x + s w|^2 = 1
    A, B, C = w @ w, 2 * (x @ w), x @ x - 1
    disc = np.sqrt(B * B - 4 * A * C)
    s_lo, s_hi = (-B - disc) / (2 * A), (-B + disc) / (2 * A)
    a, b = x + s_lo * w, x + s_hi * w
    n = np.linalg.norm
    return 0.5 * float(np.log(n(a - y) * n(b - x) / (n(a - x) * n(b - y))))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def euclid():
    return EuclideanSpace(2)


@pytest.fixture
def randers():
    return RandersSpace(DRIFT)


@pytest.fixture
def funk():
    return FunkBall(2)


@pytest.fixture
def quartic():
    norm, grad = quartic_norm(DRIFT, 2)
    return MinkowskiSpace(norm, 2, norm_grad=grad)


def print_verdict(label, ok, value, tol):
    print(f"{label}: {'PASS' if ok else 'FAIL'} (value {value:.3e}, tolerance {tol:.1e})")
