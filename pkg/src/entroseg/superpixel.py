"""Fixed-size superpixel grid, per-cell feature statistics, and the
similarity-weighted neighbor graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .filterbank import ResponseStack
from .image import RasterImage

_STD_FLOOR = 1e-12


@dataclass
class SuperPixelGrid:
    """Partition of the pixel plane into cell_size x cell_size blocks.

    Boundary cells may be smaller but are never empty.  Cell ids are
    row-major: id = row * cols + col.
    """

    cell_size: int
    width: int
    height: int
    cols: int
    rows: int

    @property
    def n_cells(self) -> int:
        return self.cols * self.rows

    def cell_extent(self, cell: int) -> tuple[int, int, int, int]:
        """Pixel box (x1, y1, x2, y2) covered by a cell, end-exclusive."""
        r, c = divmod(cell, self.cols)
        y1 = r * self.cell_size
        x1 = c * self.cell_size
        return (
            x1,
            y1,
            min(x1 + self.cell_size, self.width),
            min(y1 + self.cell_size, self.height),
        )

    def membership(self) -> np.ndarray:
        """(H, W) map assigning every pixel its cell id."""
        row_ids = np.minimum(np.arange(self.height) // self.cell_size, self.rows - 1)
        col_ids = np.minimum(np.arange(self.width) // self.cell_size, self.cols - 1)
        return row_ids[:, None] * self.cols + col_ids[None, :]

    def centroids(self) -> np.ndarray:
        """(N, 2) mean pixel position (row, col) of each cell."""
        out = np.empty((self.n_cells, 2))
        for cell in range(self.n_cells):
            x1, y1, x2, y2 = self.cell_extent(cell)
            out[cell] = ((y1 + y2 - 1) / 2.0, (x1 + x2 - 1) / 2.0)
        return out


@dataclass
class SuperPixelFeatures:
    """Per-cell feature matrix plus cell centroids.

    Row s concatenates, in a fixed order, the color statistics
    (mean, std, energy) for every channel, then the same statistics of every
    response-map group, channel-major and group-minor.  ``energy`` is the
    mean of squared values so truncated boundary cells stay comparable.
    """

    matrix: np.ndarray  # (n_cells, dim)
    centroids: np.ndarray  # (n_cells, 2) as (row, col)
    n_channels: int
    n_groups: int

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class AdjacencyGraph:
    """Neighbor pairs of grid cells with similarity weights.

    ``sigma_x`` is the standard deviation of feature distances over the
    edges; ``d_mean`` is the mean centroid distance over the edges.
    """

    n_cells: int
    edges: np.ndarray  # (E, 2) int, each pair once with edges[:,0] < edges[:,1]
    weights: np.ndarray  # (E,) float > 0
    sigma_x: float
    d_mean: float
    _csr: sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def coupling(self) -> sparse.csr_matrix:
        """Symmetric sparse weight matrix, built on first use."""
        if self._csr is None:
            i = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            j = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            w = np.concatenate([self.weights, self.weights])
            self._csr = sparse.csr_matrix(
                (w, (i, j)), shape=(self.n_cells, self.n_cells)
            )
        return self._csr


def partition(width: int, height: int, cell_size: int) -> SuperPixelGrid:
    """Divide a width x height pixel plane into a superpixel grid."""
    if cell_size < 2:
        raise ValueError("cell_size must be >= 2")
    if cell_size > min(width, height):
        raise ValueError(
            f"cell_size {cell_size} exceeds image extent {width}x{height}"
        )
    cols = -(-width // cell_size)
    rows = -(-height // cell_size)
    return SuperPixelGrid(
        cell_size=cell_size, width=width, height=height, cols=cols, rows=rows
    )


def _block_stats(channel: np.ndarray, grid: SuperPixelGrid) -> np.ndarray:
    """(n_cells, 3) mean / population std / energy per cell, via block sums."""
    row_starts = np.arange(grid.rows) * grid.cell_size
    col_starts = np.arange(grid.cols) * grid.cell_size
    sums = np.add.reduceat(
        np.add.reduceat(channel, row_starts, axis=0), col_starts, axis=1
    )
    sq = np.add.reduceat(
        np.add.reduceat(channel * channel, row_starts, axis=0), col_starts, axis=1
    )
    row_sizes = np.diff(np.append(row_starts, grid.height))
    col_sizes = np.diff(np.append(col_starts, grid.width))
    counts = np.outer(row_sizes, col_sizes).astype(np.float64)

    mean = sums / counts
    energy = sq / counts
    var = np.maximum(energy - mean * mean, 0.0)
    out = np.stack([mean, np.sqrt(var), energy], axis=-1)
    return out.reshape(grid.n_cells, 3)


def compute_features(
    img: RasterImage, stacks: list[ResponseStack], grid: SuperPixelGrid
) -> SuperPixelFeatures:
    """Aggregate color and texture statistics over every grid cell.

    ``stacks`` supplies one pooled response stack per image channel, with
    maps the same size as the image.
    """
    if len(stacks) != img.channels:
        raise ValueError(f"expected {img.channels} response stacks, got {len(stacks)}")
    if grid.width != img.width or grid.height != img.height:
        raise ValueError("grid does not cover the image")
    for st in stacks:
        if st.maps.shape[1:] != (img.height, img.width):
            raise ValueError("response maps must match the image size")

    n_groups = stacks[0].n_groups
    blocks = [_block_stats(img.channel(c), grid) for c in range(img.channels)]
    for st in stacks:
        for j in range(n_groups):
            blocks.append(_block_stats(st.maps[j], grid))
    matrix = np.concatenate(blocks, axis=1)
    return SuperPixelFeatures(
        matrix=matrix,
        centroids=grid.centroids(),
        n_channels=img.channels,
        n_groups=n_groups,
    )


def standardize(
    features: SuperPixelFeatures,
) -> tuple[SuperPixelFeatures, np.ndarray, np.ndarray]:
    """Z-score every feature dimension across cells.

    Dimensions with std below 1e-12 are zeroed and their std recorded as 1.
    Returns the transformed features plus the (mean, std) used.
    """
    if features.n_cells < 2:
        raise ValueError("standardization needs at least 2 cells")
    mean = features.matrix.mean(axis=0)
    std = features.matrix.std(axis=0)
    degenerate = std < _STD_FLOOR
    safe_std = np.where(degenerate, 1.0, std)
    z = (features.matrix - mean) / safe_std
    z[:, degenerate] = 0.0
    out = SuperPixelFeatures(
        matrix=z,
        centroids=features.centroids,
        n_channels=features.n_channels,
        n_groups=features.n_groups,
    )
    return out, mean, safe_std


def edge_weight(
    d_feat: float, sigma_x: float, d_spatial: float, d_mean: float
) -> float:
    """Similarity of one neighbor pair.

    exp(-d_feat / (2 sigma_x^2)) scaled by the inverse relative centroid
    distance d_spatial / d_mean.  When sigma_x is degenerate (all edge
    feature distances equal) the exponential factor is taken as 1.
    """
    if sigma_x < _STD_FLOOR:
        feat_term = 1.0
    else:
        feat_term = float(np.exp(-d_feat / (2.0 * sigma_x * sigma_x)))
    return feat_term * d_mean / d_spatial


def grid_edges(grid: SuperPixelGrid, connectivity: int = 4) -> np.ndarray:
    """Neighbor cell pairs under 4- or 8-connectivity, each listed once."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    pairs = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            s = r * grid.cols + c
            if c + 1 < grid.cols:
                pairs.append((s, s + 1))
            if r + 1 < grid.rows:
                pairs.append((s, s + grid.cols))
                if connectivity == 8:
                    if c + 1 < grid.cols:
                        pairs.append((s, s + grid.cols + 1))
                    if c > 0:
                        pairs.append((s, s + grid.cols - 1))
    return np.array(pairs, dtype=np.int64)


def build_adjacency(
    grid: SuperPixelGrid,
    features: SuperPixelFeatures,
    connectivity: int = 4,
) -> AdjacencyGraph:
    """Weight every neighbor pair by feature similarity and inverse
    relative spatial distance.

    Expects standardized features so the Euclidean feature distance is
    scale-free.
    """
    if grid.n_cells < 2:
        raise ValueError("adjacency needs at least 2 cells")
    if features.n_cells != grid.n_cells:
        raise ValueError("features do not match the grid")

    edges = grid_edges(grid, connectivity)
    a, b = edges[:, 0], edges[:, 1]
    d_feat = np.linalg.norm(features.matrix[a] - features.matrix[b], axis=1)
    d_spatial = np.linalg.norm(features.centroids[a] - features.centroids[b], axis=1)
    sigma_x = float(d_feat.std())
    d_mean = float(d_spatial.mean())

    if sigma_x < _STD_FLOOR:
        feat_term = np.ones_like(d_feat)
    else:
        feat_term = np.exp(-d_feat / (2.0 * sigma_x * sigma_x))
    weights = feat_term * d_mean / d_spatial

    return AdjacencyGraph(
        n_cells=grid.n_cells,
        edges=edges,
        weights=weights,
        sigma_x=sigma_x,
        d_mean=d_mean,
    )
