"""Synthetic data with known structure, for tests and demos."""
import numpy as np

from .corr import Dataset
from .homology import maximal_cliques
from .timeseries import MultivariateSeries
from .tmfg import tmfg_construct


def random_similarity(p: int, rng) -> np.ndarray:
    """Symmetric matrix with unit diagonal and off-diagonal in [0, 1)."""
    a = rng.random((p, p))
    w = np.triu(a, 1)
    w = w + w.T
    np.fill_diagonal(w, 1.0)
    return w


def planted_tmfg_dataset(p: int = 20, n: int = 5000, seed: int = 0,
                         noise: float = 0.1, loading: float = 1.0) -> tuple:
    """Regression data whose target is a sum of nonlinear clique terms.

    A TMFG on ``p`` vertices is planted from random weights. Features share
    one Gaussian latent factor per tetrahedron they belong to, so the
    correlation structure follows the planted cliques. The target adds,
    for every tetrahedron, a smooth nonlinear function of a random linear
    combination of its four features, plus Gaussian noise with standard
    deviation ``noise`` times the signal standard deviation.

    Returns ``(dataset, planted_graph)``.
    """
    rng = np.random.default_rng(seed)
    graph, _ = tmfg_construct(random_similarity(p, rng))
    cliques = maximal_cliques(graph)
    z = rng.normal(size=(n, len(cliques)))
    x = rng.normal(size=(n, p))
    for k, c in enumerate(cliques):
        x[:, list(c)] += loading * z[:, [k]]
    x /= x.std(axis=0)
    signal = np.zeros(n)
    for c in cliques:
        u = rng.normal(size=len(c))
        u /= np.linalg.norm(u)
        proj = x[:, list(c)] @ u
        amp = rng.uniform(0.5, 1.5)
        signal += amp * np.tanh(1.5 * proj) + 0.5 * amp * np.abs(proj)
    y = signal + rng.normal(size=n) * noise * signal.std()
    names = tuple(f"x{i}" for i in range(p))
    return Dataset(names, x, y, "y"), graph


def seasonal_ar_series(n_series: int = 5, length: int = 3000, period: int = 24,
                       seed: int = 0, ar: float = 0.6, coupling: float = 0.15,
                       noise: float = 0.3) -> MultivariateSeries:
    """Sinusoidal seasonality plus a coupled vector AR(1) component."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    amp = rng.uniform(0.8, 1.5, n_series)
    phase = rng.uniform(0, 2 * np.pi, n_series)
    seasonal = amp * np.sin(2 * np.pi * t[:, None] / period + phase)
    phi = ar * np.eye(n_series) + coupling * rng.uniform(-1, 1, (n_series, n_series)) / n_series
    radius = max(abs(np.linalg.eigvals(phi)))
    if radius >= 0.95:
        phi *= 0.9 / radius
    u = np.zeros((length, n_series))
    eps = rng.normal(size=(length, n_series)) * noise
    for i in range(1, length):
        u[i] = phi @ u[i - 1] + eps[i]
    return MultivariateSeries(seasonal + u, sample_rate="1 step")
