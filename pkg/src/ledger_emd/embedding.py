"""Two-dimensional company maps via t-SNE on precomputed distances.

The Gaussian affinities are computed from the squared pairwise distances of
the chosen company metric instead of squared Euclidean feature distances;
everything downstream (symmetrization, Student-t low-dimensional kernel,
early exaggeration, momentum schedule) is the standard t-SNE recipe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConvergenceError, ValidationError
from .emd import DistanceMatrix

PROB_FLOOR = 1e-12
PERPLEXITY_TOL = 1e-5
SIGMA_SEARCH_MAX_ITER = 50


@dataclass(frozen=True)
class TsneParams:
    perplexity: float = 20.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0


@dataclass
class Embedding2D:
    company_ids: list[str]
    coords: np.ndarray
    kl_history: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["company_id,x,y"]
        for cid, (x, y) in zip(self.company_ids, self.coords):
            lines.append(f"{cid},{x!r},{y!r}")
        return "\n".join(lines) + "\n"


def _as_square(d: DistanceMatrix | np.ndarray) -> np.ndarray:
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValidationError(f"expected a square distance matrix, got shape {values.shape}")
    return values


def _row_affinities(dsq: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian affinities for one row at precision beta = 1/(2 sigma^2),
    plus the perplexity 2^H they achieve."""
    x = -dsq * beta
    x -= x.max()
    p = np.exp(x)
    p /= p.sum()
    plogp = np.where(p > 0, p * np.log2(np.maximum(p, PROB_FLOOR)), 0.0)
    return p, float(2.0 ** (-plogp.sum()))


def conditional_probabilities(
    d: DistanceMatrix | np.ndarray, perplexity: float
) -> np.ndarray:
    """Row-stochastic Gaussian affinities over squared distances.

    Each row's bandwidth is found by binary search on the precision so that
    the row's perplexity (2 to the Shannon entropy) matches the target within
    PERPLEXITY_TOL. Rows of exactly constant distances are inherently uniform
    at every bandwidth and are accepted as such.
    """
    dist = _as_square(d)
    n = dist.shape[0]
    if not 0 < perplexity < n - 1:
        raise ValidationError(f"perplexity must be in (0, {n - 1}), got {perplexity}")

    p_matrix = np.zeros((n, n))
    for i in range(n):
        dsq = np.delete(dist[i], i) ** 2
        if dsq.max(initial=0.0) == 0.0:
            raise ConvergenceError(f"row {i}: all distances are zero")

        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        p, achieved = _row_affinities(dsq, beta)
        converged = abs(achieved - perplexity) <= PERPLEXITY_TOL
        for _ in range(SIGMA_SEARCH_MAX_ITER):
            if converged:
                break
            if achieved > perplexity:
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == np.inf else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = (beta + beta_lo) / 2.0
            p, achieved = _row_affinities(dsq, beta)
            converged = abs(achieved - perplexity) <= PERPLEXITY_TOL
        if not converged:
            if np.ptp(dsq) == 0.0:
                # Equidistant neighbors: the row is uniform no matter the
                # bandwidth, so the target perplexity is unreachable by design.
                pass
            else:
                raise ConvergenceError(
                    f"row {i}: bandwidth search did not reach perplexity {perplexity} "
                    f"(achieved {achieved:.6f}) in {SIGMA_SEARCH_MAX_ITER} iterations"
                )
        p_matrix[i, :i] = p[:i]
        p_matrix[i, i + 1 :] = p[i:]
    return p_matrix


def symmetrized_affinities(
    d: DistanceMatrix | np.ndarray, perplexity: float
) -> np.ndarray:
    """Joint probabilities p_ij = (p_j|i + p_i|j) / 2n; sums to 1."""
    cond = conditional_probabilities(d, perplexity)
    return (cond + cond.T) / (2.0 * cond.shape[0])


def _student_t_kernel(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff_sq = np.sum((y[:, None, :] - y[None, :, :]) ** 2, axis=2)
    num = 1.0 / (1.0 + diff_sq)
    np.fill_diagonal(num, 0.0)
    return num, num / num.sum()


def _kl_value(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], PROB_FLOOR))))


def _gradient(p: np.ndarray, q: np.ndarray, num: np.ndarray, y: np.ndarray) -> np.ndarray:
    a = (p - q) * num
    return 4.0 * (a.sum(axis=1)[:, None] * y - a @ y)


def kl_objective_and_gradient(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) under the Student-t kernel at coordinates y, with its
    analytic gradient 4 * sum_j (p_ij - q_ij) (1 + |y_i - y_j|^2)^-1 (y_i - y_j)."""
    num, q = _student_t_kernel(y)
    return _kl_value(p, q), _gradient(p, q, num, y)


def tsne_embed(d: DistanceMatrix, params: TsneParams = TsneParams()) -> Embedding2D:
    """Gradient-descent t-SNE to two dimensions from a distance matrix.

    Coordinates start from a seeded isotropic Gaussian (sd 1e-4); the same
    seed reproduces the exact same embedding. The per-iteration KL value of
    the un-exaggerated objective is recorded in the result.
    """
    dist = _as_square(d)
    n = dist.shape[0]
    if n < 3:
        raise ValidationError(f"need at least 3 companies to embed, got {n}")
    p = symmetrized_affinities(dist, params.perplexity)

    rng = np.random.default_rng(params.seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    kl_history = np.empty(params.iterations)

    for it in range(params.iterations):
        p_eff = p * params.early_exaggeration_factor if it < params.exaggeration_iters else p
        num, q = _student_t_kernel(y)
        kl_history[it] = _kl_value(p, q)
        grad = _gradient(p_eff, q, num, y)
        momentum = (
            params.momentum_initial
            if it < params.momentum_switch_iter
            else params.momentum_final
        )
        velocity = momentum * velocity - params.learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        if not np.isfinite(y).all():
            raise ConvergenceError(f"embedding diverged at iteration {it}")

    ids = d.company_ids if isinstance(d, DistanceMatrix) else [str(i) for i in range(n)]
    return Embedding2D(company_ids=list(ids), coords=y, kl_history=kl_history)


def render_embedding_svg(
    emb: Embedding2D,
    highlight_ids: Iterable[str] = (),
    outlier_ids: Iterable[str] = (),
    width: int = 800,
    height: int = 600,
) -> str:
    """Static scatter plot: green dots, diamond markers for the highlighted
    companies, black rings around flagged outliers."""
    highlight = set(highlight_ids)
    outliers = set(outlier_ids)
    coords = emb.coords
    pad = 0.05
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    lo = lo - pad * span
    span = span * (1 + 2 * pad)

    def to_px(pt: np.ndarray) -> tuple[float, float]:
        x = (pt[0] - lo[0]) / span[0] * width
        y = height - (pt[1] - lo[1]) / span[1] * height
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for cid, pt in zip(emb.company_ids, coords):
        x, y = to_px(pt)
        if cid in highlight:
            pts = f"{x:.2f},{y - 5:.2f} {x + 5:.2f},{y:.2f} {x:.2f},{y + 5:.2f} {x - 5:.2f},{y:.2f}"
            parts.append(f'<polygon points="{pts}" fill="#e0509a"><title>{cid}</title></polygon>')
        else:
            parts.append(
                f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#3a9d4e"><title>{cid}</title></circle>'
            )
        if cid in outliers:
            parts.append(
                f'<circle cx="{x:.2f}" cy="{y:.2f}" r="7" fill="none" stroke="black" stroke-width="1.5"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
