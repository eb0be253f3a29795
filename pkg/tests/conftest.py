import sys

import numpy as np
import pytest


def random_orthonormal(rng, n, r):
    Q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return Q


def gram_schmidt(A):
    """Classical Gram-Schmidt, written out column by column."""
    A = np.asarray(A, dtype=float)
    n, r = A.shape
    Q = np.zeros((n, r))
    R = np.zeros((r, r))
    for j in range(r):
        v = A[:, j].copy()
        for i in range(j):
            R[i, j] = Q[:, i] @ A[:, j]
            v -= R[i, j] * Q[:, i]
        R[j, j] = np.linalg.norm(v)
        Q[:, j] = v / R[j, j]
    return Q, R


def lstsq_oracle(F, y, lam=0.0):
    """Normal equations (F^T F + lam I)^{-1} F^T y."""
    return np.linalg.solve(F.T @ F + lam * np.eye(F.shape[1]), F.T @ y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
