import numpy as np
import pytest

from alphalis import InverseProblem


def random_spd(rng, d, floor=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + floor * np.eye(d)


def random_orthonormal(rng, d, k):
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q


def linear_problem(rng, d_x, d_y, gamma=None, gamma0=None, mean=None):
    a = rng.standard_normal((d_y, d_x))
    gamma = np.eye(d_y) if gamma is None else gamma
    gamma0 = np.eye(d_x) if gamma0 is None else gamma0
    mean = np.zeros(d_x) if mean is None else mean
    y = a @ rng.standard_normal(d_x) + rng.standard_normal(d_y)
    return InverseProblem(forward=lambda x: a @ x, gamma=gamma, prior_mean=mean, gamma0=gamma0,
                          y_dagger=y, jacobian=lambda x: a, matrix=a)


def iat_se(x):
    """Standard error of a chain mean using an initial-positive-sequence autocorrelation time."""
    x = np.asarray(x) - np.mean(x)
    n = x.size
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * x.var())
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return np.sqrt(tau * np.var(x) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Store a PASS/FAIL line for the terminal summary and return ``ok``."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
