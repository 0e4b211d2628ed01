"""Spatially regularized Gaussian mixture over superpixel features.

EM fits the class-conditional Gaussians with a mean-field neighbor term;
iterated conditional modes then maximizes the regularized labeling
objective, and same-label connected cells are merged into pixel segments.
Neighbor agreement is rewarded additively in the log domain (a Potts-style
potential weighted by the edge similarity), so the pairwise factor stays
well-defined for labelings with disagreeing neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_array

from .superpixel import AdjacencyGraph, SuperPixelFeatures, SuperPixelGrid

VARIANCE_FLOOR = 1e-6

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int8)


@dataclass
class MixtureParams:
    """Gaussian mixture parameters with diagonal covariances."""

    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D), each >= VARIANCE_FLOOR

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.priors.ndim != 1 or self.means.ndim != 2 or self.variances.ndim != 2:
            raise ValueError("malformed mixture parameter shapes")
        if not (len(self.priors) == len(self.means) == len(self.variances)):
            raise ValueError("component count mismatch")
        if abs(self.priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        if (self.variances < VARIANCE_FLOOR * (1 - 1e-12)).any():
            raise ValueError(f"variances must be >= {VARIANCE_FLOOR}")

    @property
    def n_components(self) -> int:
        return len(self.priors)


@dataclass
class LabelField:
    """Per-cell class labels plus mixture posteriors.

    Labels are the regularized-objective maximizers, so they need not match
    argmax of the posteriors when the spatial term is active.  Fitting
    history fields are populated by :func:`em_fit` only.
    """

    labels: np.ndarray  # (N,) int in [0, K)
    posteriors: np.ndarray  # (N, K), rows sum to 1
    loglik_history: np.ndarray | None = None
    objective_history: np.ndarray | None = None
    n_iter: int = 0
    converged: bool = False


@dataclass
class Segment:
    """Connected same-label cell region with a padded pixel bounding box."""

    label: int
    cells: np.ndarray  # sorted cell ids
    bbox: tuple[int, int, int, int]  # (x1, y1, x2, y2), end-exclusive, clipped

    @property
    def cell_count(self) -> int:
        return len(self.cells)


@dataclass
class SegmentSet:
    """All segments of one image, partitioning the cell set."""

    segments: list[Segment]
    width: int
    height: int
    padding: int

    def __len__(self) -> int:
        return len(self.segments)

    def to_records(self) -> list[dict]:
        return [
            {
                "label": int(s.label),
                "cell_count": int(s.cell_count),
                "bbox": [int(v) for v in s.bbox],
            }
            for s in self.segments
        ]


def _as_matrix(features: SuperPixelFeatures | np.ndarray) -> np.ndarray:
    if isinstance(features, SuperPixelFeatures):
        return features.matrix
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    return arr


def _log_gaussian(x: np.ndarray, params: MixtureParams) -> np.ndarray:
    """(N, K) log density of every point under every component."""
    inv_var = 1.0 / params.variances  # (K, D)
    const = -0.5 * np.log(2.0 * np.pi * params.variances).sum(axis=1)  # (K,)
    quad = (
        (x * x) @ inv_var.T
        - 2.0 * x @ (params.means * inv_var).T
        + (params.means * params.means * inv_var).sum(axis=1)
    )
    return const - 0.5 * quad


def _log_unary(x: np.ndarray, params: MixtureParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_priors = np.log(params.priors)
    return log_priors + _log_gaussian(x, params)


def init_params(
    features: SuperPixelFeatures | np.ndarray, n_components: int, seed: int = 0
) -> MixtureParams:
    """Seed the mixture with farthest-point means.

    The first mean is a random data point drawn from ``seed``; each further
    mean is the point farthest from the ones already chosen.  Variances
    start at the global per-dimension variance, priors uniform.
    """
    x = _as_matrix(features)
    n = x.shape[0]
    if n_components < 1:
        raise ValueError("need at least one component")
    if n_components > n:
        raise ValueError(f"cannot place {n_components} components on {n} points")

    global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    if n_components == 1:
        means = x.mean(axis=0)[np.newaxis, :]
    else:
        rng = np.random.default_rng(seed)
        chosen = [int(rng.integers(n))]
        min_d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
        while len(chosen) < n_components:
            nxt = int(np.argmax(min_d2))
            chosen.append(nxt)
            min_d2 = np.minimum(min_d2, ((x - x[nxt]) ** 2).sum(axis=1))
        means = x[chosen].copy()

    return MixtureParams(
        priors=np.full(n_components, 1.0 / n_components),
        means=means,
        variances=np.tile(global_var, (n_components, 1)),
    )


def em_fit(
    features: SuperPixelFeatures | np.ndarray,
    graph: AdjacencyGraph | None,
    n_components: int,
    beta: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> tuple[MixtureParams, LabelField]:
    """Fit the mixture by mean-field regularized EM.

    The E-step scales each component's prior by
    exp(beta * sum_neighbors w * gamma_neighbor), computed in the log
    domain; with beta = 0 (or no graph) this is exactly standard GMM-EM.
    Convergence is declared when the relative change of the expected
    complete-data objective drops below ``tol``.  Labels in the returned
    field come from :func:`map_labels` on the fitted parameters.
    """
    x = _as_matrix(features)
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n = x.shape[0]
    if graph is not None and graph.n_cells != n:
        raise ValueError("graph size does not match the feature matrix")
    params = init_params(x, n_components, seed)
    coupling = graph.coupling() if (graph is not None and beta > 0) else None

    gamma = np.full((n, n_components), 1.0 / n_components)
    loglik_history: list[float] = []
    objective_history: list[float] = []
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        unary = _log_unary(x, params)
        logits = unary
        if coupling is not None:
            logits = unary + beta * (coupling @ gamma)
        shift = logits.max(axis=1, keepdims=True)
        expd = np.exp(logits - shift)
        norm = expd.sum(axis=1, keepdims=True)
        gamma = expd / norm
        # marginal log-likelihood of the parameters entering this iteration
        u_shift = unary.max(axis=1, keepdims=True)
        loglik = float(
            (np.log(np.exp(unary - u_shift).sum(axis=1)) + u_shift[:, 0]).sum()
        )
        loglik_history.append(loglik)

        with np.errstate(divide="ignore", invalid="ignore"):
            xlogx = np.where(gamma > 0, gamma * np.log(gamma), 0.0)
        objective = float((gamma * unary).sum() - xlogx.sum())
        if coupling is not None:
            objective += 0.5 * beta * float((gamma * (coupling @ gamma)).sum())
        objective_history.append(objective)

        # M-step: weighted Gaussian updates with a variance floor
        nk = gamma.sum(axis=0)
        nk_safe = nk + 1e-300
        means = (gamma.T @ x) / nk_safe[:, np.newaxis]
        second = (gamma.T @ (x * x)) / nk_safe[:, np.newaxis]
        variances = np.maximum(second - means * means, VARIANCE_FLOOR)
        params = MixtureParams(priors=nk / n, means=means, variances=variances)

        if len(objective_history) >= 2:
            prev = objective_history[-2]
            if abs(objective - prev) <= tol * max(1.0, abs(prev)):
                converged = True
                break

    # posteriors consistent with the final parameters
    unary = _log_unary(x, params)
    logits = unary if coupling is None else unary + beta * (coupling @ gamma)
    shift = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - shift)
    gamma = expd / expd.sum(axis=1, keepdims=True)
    u_shift = unary.max(axis=1, keepdims=True)
    loglik_history.append(
        float((np.log(np.exp(unary - u_shift).sum(axis=1)) + u_shift[:, 0]).sum())
    )

    map_field = map_labels(params, x, graph, beta)
    return params, LabelField(
        labels=map_field.labels,
        posteriors=gamma,
        loglik_history=np.array(loglik_history),
        objective_history=np.array(objective_history),
        n_iter=n_iter,
        converged=converged,
    )


def labeling_objective(
    params: MixtureParams,
    features: SuperPixelFeatures | np.ndarray,
    graph: AdjacencyGraph | None,
    beta: float,
    labels: np.ndarray,
) -> float:
    """Log objective of a labeling: unary terms plus the weighted count of
    agreeing neighbor pairs."""
    x = _as_matrix(features)
    unary = _log_unary(x, params)
    total = float(unary[np.arange(len(labels)), labels].sum())
    if graph is not None and beta > 0:
        a, b = graph.edges[:, 0], graph.edges[:, 1]
        agree = labels[a] == labels[b]
        total += beta * float(graph.weights[agree].sum())
    return total


def map_labels(
    params: MixtureParams,
    features: SuperPixelFeatures | np.ndarray,
    graph: AdjacencyGraph | None,
    beta: float = 1.0,
    max_sweeps: int = 20,
) -> LabelField:
    """MAP labeling by iterated conditional modes.

    Cells start at their best unary class and are swept in raster order;
    each update maximizes the unary score plus beta-weighted agreement with
    the current neighbor labels, ties going to the lowest class index.
    Stops after a sweep with no change, or ``max_sweeps``.
    """
    x = _as_matrix(features)
    if graph is not None and graph.n_cells != x.shape[0]:
        raise ValueError("graph size does not match the feature matrix")
    unary = _log_unary(x, params)
    labels = unary.argmax(axis=1)

    shift = unary.max(axis=1, keepdims=True)
    expd = np.exp(unary - shift)
    posteriors = expd / expd.sum(axis=1, keepdims=True)

    if graph is not None and beta > 0:
        csr = graph.coupling()
        indptr, indices, data = csr.indptr, csr.indices, csr.data
        for _ in range(max_sweeps):
            changed = False
            for s in range(len(labels)):
                scores = unary[s].copy()
                for idx in range(indptr[s], indptr[s + 1]):
                    scores[labels[indices[idx]]] += beta * data[idx]
                best = int(scores.argmax())
                if best != labels[s]:
                    labels[s] = best
                    changed = True
            if not changed:
                break

    return LabelField(labels=labels, posteriors=posteriors)


def merge_segments(
    labels: LabelField | np.ndarray,
    grid: SuperPixelGrid,
    padding: int = 8,
    min_cells: int = 1,
) -> SegmentSet:
    """Merge same-label cells into connected segments with padded boxes.

    Components are found under 4-connectivity of the cell grid; each
    segment's box is the union of its cells' pixel extents grown by
    ``padding`` and clipped to the image.  Components with fewer than
    ``min_cells`` cells are dropped (default keeps everything).
    """
    lab = labels.labels if isinstance(labels, LabelField) else np.asarray(labels)
    if lab.size != grid.n_cells:
        raise ValueError("labels do not cover the grid")
    label_grid = lab.reshape(grid.rows, grid.cols)

    found: list[Segment] = []
    for k in np.unique(label_grid):
        comp, n_comp = ndimage.label(label_grid == k, structure=_FOUR_CONN)
        for ci in range(1, n_comp + 1):
            cells = np.flatnonzero((comp == ci).ravel())
            if len(cells) < min_cells:
                continue
            extents = np.array([grid.cell_extent(c) for c in cells])
            x1 = max(int(extents[:, 0].min()) - padding, 0)
            y1 = max(int(extents[:, 1].min()) - padding, 0)
            x2 = min(int(extents[:, 2].max()) + padding, grid.width)
            y2 = min(int(extents[:, 3].max()) + padding, grid.height)
            found.append(Segment(label=int(k), cells=cells, bbox=(x1, y1, x2, y2)))

    found.sort(key=lambda s: int(s.cells[0]))
    return SegmentSet(
        segments=found, width=grid.width, height=grid.height, padding=padding
    )


def select_k(
    features: SuperPixelFeatures | np.ndarray,
    graph: AdjacencyGraph | None,
    k_range,
    beta: float = 1.0,
    seed: int = 0,
) -> int:
    """Pick the component count minimizing BIC.

    Candidate counts are scored with plain (beta = 0) mixture fits; ties go
    to the smaller count.  ``beta`` only matters to the caller's later fit.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k_range")
    x = _as_matrix(features)
    n, d = x.shape
    if ks[-1] > n:
        raise ValueError("k_range exceeds the number of cells")

    best_k, best_bic = None, np.inf
    for k in ks:
        _, field = em_fit(x, None, k, beta=0.0, seed=seed)
        loglik = float(field.loglik_history[-1])
        n_params = (k - 1) + 2 * k * d
        bic = -2.0 * loglik + n_params * np.log(n)
        if bic < best_bic:
            best_k, best_bic = k, bic
    return best_k


class SpatialGaussianMixture(ClusterMixin, BaseEstimator):
    """Gaussian mixture clusterer with a graph-weighted smoothness prior.

    Follows the scikit-learn estimator protocol: hyperparameters are set in
    ``__init__`` and exposed via ``get_params``; ``fit`` accepts the sample
    matrix plus an optional superpixel adjacency graph whose edge weights
    scale the neighbor coupling.  With ``beta=0`` or no graph this reduces
    to an ordinary diagonal-covariance GMM.
    """

    def __init__(
        self,
        n_components: int = 4,
        beta: float = 1.0,
        max_iter: int = 100,
        tol: float = 1e-6,
        max_sweeps: int = 20,
        random_state: int = 0,
    ):
        self.n_components = n_components
        self.beta = beta
        self.max_iter = max_iter
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def fit(self, X, y=None, graph: AdjacencyGraph | None = None):
        X = check_array(X, ensure_min_samples=self.n_components)
        params, field = em_fit(
            X,
            graph,
            self.n_components,
            beta=self.beta,
            max_iter=self.max_iter,
            tol=self.tol,
            seed=self.random_state,
        )
        self.params_ = params
        self.labels_ = field.labels
        self.posteriors_ = field.posteriors
        self.loglik_history_ = field.loglik_history
        self.objective_history_ = field.objective_history
        self.n_iter_ = field.n_iter
        self.converged_ = field.converged
        self.graph_ = graph
        return self

    def predict(self, X, graph: AdjacencyGraph | None = None):
        if not hasattr(self, "params_"):
            raise ValueError("estimator is not fitted")
        X = check_array(X)
        field = map_labels(
            self.params_, X, graph, beta=self.beta, max_sweeps=self.max_sweeps
        )
        return field.labels

    def fit_predict(self, X, y=None, graph: AdjacencyGraph | None = None):
        return self.fit(X, graph=graph).labels_
