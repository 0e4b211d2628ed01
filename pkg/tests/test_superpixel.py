"""Superpixel grid geometry, cell statistics, and the neighbor graph."""

import numpy as np
import pytest

from entroseg.filterbank import ResponseStack, build_lm_filterbank, compute_response_stack
from entroseg.image import RasterImage
from entroseg.superpixel import (
    build_adjacency,
    compute_features,
    edge_weight,
    grid_edges,
    partition,
    standardize,
)
from oracles import cell_stats_brute_force


def _fake_stacks(img, n_groups, seed=0):
    rng = np.random.default_rng(seed)
    return [
        ResponseStack(
            maps=rng.random((n_groups, img.height, img.width)),
            groups=[("g", i) for i in range(n_groups)],
            channel=c,
        )
        for c in range(img.channels)
    ]


class TestPartition:
    def test_exact_division(self):
        grid = partition(64, 32, 16)
        assert (grid.cols, grid.rows) == (4, 2)
        assert grid.n_cells == 8

    def test_ceil_division_for_ragged_edges(self):
        grid = partition(65, 33, 16)
        assert (grid.cols, grid.rows) == (5, 3)

    def test_boundary_cells_are_truncated(self):
        grid = partition(20, 20, 16)
        assert grid.cell_extent(0) == (0, 0, 16, 16)
        assert grid.cell_extent(1) == (16, 0, 20, 16)
        assert grid.cell_extent(3) == (16, 16, 20, 20)

    def test_extents_tile_the_plane(self):
        grid = partition(37, 22, 7)
        covered = np.zeros((22, 37), dtype=int)
        for cell in range(grid.n_cells):
            x1, y1, x2, y2 = grid.cell_extent(cell)
            assert x2 > x1 and y2 > y1
            covered[y1:y2, x1:x2] += 1
        assert (covered == 1).all()

    def test_membership_matches_extents(self):
        grid = partition(37, 22, 7)
        member = grid.membership()
        for cell in range(grid.n_cells):
            x1, y1, x2, y2 = grid.cell_extent(cell)
            assert (member[y1:y2, x1:x2] == cell).all()

    def test_centroids_are_cell_means(self):
        grid = partition(20, 20, 16)
        member = grid.membership()
        for cell in range(grid.n_cells):
            ys, xs = np.nonzero(member == cell)
            np.testing.assert_allclose(
                grid.centroids()[cell], [ys.mean(), xs.mean()]
            )

    def test_rejects_cell_size_above_extent(self):
        with pytest.raises(ValueError):
            partition(10, 40, 16)

    def test_rejects_tiny_cell_size(self):
        with pytest.raises(ValueError):
            partition(10, 10, 1)


class TestCellStatistics:
    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        for trial in range(4):
            h, w = rng.integers(10, 40, size=2)
            cs = int(rng.integers(3, 9))
            if cs > min(h, w):
                cs = int(min(h, w))
            img = RasterImage(rng.random((h, w, 1)))
            grid = partition(int(w), int(h), cs)
            feats = compute_features(img, _fake_stacks(img, 2, seed=trial), grid)
            want = np.array(cell_stats_brute_force(img.channel(0), grid.cell_size))
            np.testing.assert_allclose(feats.matrix[:, :3], want, atol=1e-12)

    def test_feature_layout_is_channel_major(self):
        # columns: 3 stats per channel, then 3 per response group per channel
        rng = np.random.default_rng(4)
        img = RasterImage(rng.random((12, 12, 3)))
        grid = partition(12, 12, 6)
        stacks = _fake_stacks(img, 2, seed=9)
        feats = compute_features(img, stacks, grid)
        assert feats.matrix.shape == (4, (3 + 3 * 2) * 3)
        assert (feats.n_channels, feats.n_groups) == (3, 2)

        mean1 = np.array(cell_stats_brute_force(img.channel(1), 6))[:, 0]
        np.testing.assert_allclose(feats.matrix[:, 3], mean1, atol=1e-12)
        # first group of channel 0 follows the color stats
        g0 = np.array(cell_stats_brute_force(stacks[0].maps[0], 6))[:, 0]
        np.testing.assert_allclose(feats.matrix[:, 9], g0, atol=1e-12)
        # channel 1's groups come after all of channel 0's
        g1 = np.array(cell_stats_brute_force(stacks[1].maps[0], 6))[:, 0]
        np.testing.assert_allclose(feats.matrix[:, 15], g1, atol=1e-12)

    def test_constant_image_stats(self):
        img = RasterImage(np.full((16, 16, 1), 0.25))
        grid = partition(16, 16, 8)
        stacks = [
            ResponseStack(maps=np.zeros((1, 16, 16)), groups=[("g", 0)], channel=0)
        ]
        feats = compute_features(img, stacks, grid)
        np.testing.assert_allclose(feats.matrix[:, 0], 0.25)
        np.testing.assert_allclose(feats.matrix[:, 1], 0.0)
        np.testing.assert_allclose(feats.matrix[:, 2], 0.0625)

    def test_rejects_stack_count_mismatch(self):
        img = RasterImage(np.zeros((8, 8, 3)))
        grid = partition(8, 8, 4)
        with pytest.raises(ValueError):
            compute_features(img, _fake_stacks(img, 2)[:1], grid)

    def test_rejects_grid_size_mismatch(self):
        img = RasterImage(np.zeros((8, 8, 1)))
        with pytest.raises(ValueError):
            compute_features(img, _fake_stacks(img, 2), partition(12, 8, 4))

    def test_full_pipeline_shapes(self, lm_bank):
        rng = np.random.default_rng(8)
        img = RasterImage(rng.random((64, 64, 1)))
        stack = compute_response_stack(img.channel(0), lm_bank)
        grid = partition(64, 64, 16)
        feats = compute_features(img, [stack], grid)
        assert feats.matrix.shape == (16, (1 + 18) * 3)


class TestStandardize:
    def test_zero_mean_unit_std(self):
        rng = np.random.default_rng(21)
        img = RasterImage(rng.random((24, 24, 1)))
        grid = partition(24, 24, 6)
        feats = compute_features(img, _fake_stacks(img, 2, seed=1), grid)
        z, mean, std = standardize(feats)
        np.testing.assert_allclose(z.matrix.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.matrix.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(mean, feats.matrix.mean(axis=0))
        np.testing.assert_allclose(std, feats.matrix.std(axis=0))

    def test_degenerate_dimension_becomes_zero(self):
        feats = _features_from_matrix(np.array([[1.0, 3.0], [2.0, 3.0]]))
        z, _, std = standardize(feats)
        np.testing.assert_allclose(z.matrix[:, 1], 0.0)
        assert std[1] == 1.0

    def test_roundtrip_recovers_input(self):
        rng = np.random.default_rng(2)
        feats = _features_from_matrix(rng.random((6, 4)) * 10)
        z, mean, std = standardize(feats)
        np.testing.assert_allclose(z.matrix * std + mean, feats.matrix, atol=1e-12)

    def test_rejects_single_cell(self):
        with pytest.raises(ValueError):
            standardize(_features_from_matrix(np.ones((1, 4))))


def _features_from_matrix(matrix):
    from entroseg.superpixel import SuperPixelFeatures

    n = matrix.shape[0]
    return SuperPixelFeatures(
        matrix=np.asarray(matrix, dtype=np.float64),
        centroids=np.stack([np.zeros(n), np.arange(n, dtype=np.float64)], axis=1),
        n_channels=1,
        n_groups=0,
    )


class TestGridEdges:
    def test_four_connected_counts(self):
        grid = partition(48, 32, 16)  # 3 x 2 cells
        edges = grid_edges(grid, 4)
        assert len(edges) == 2 * 2 + 3 * 1  # rows*(cols-1) + cols*(rows-1)
        assert (edges[:, 0] < edges[:, 1]).all()

    def test_four_connected_pairs(self):
        grid = partition(32, 32, 16)
        got = {tuple(e) for e in grid_edges(grid, 4)}
        assert got == {(0, 1), (0, 2), (1, 3), (2, 3)}

    def test_eight_connected_adds_diagonals(self):
        grid = partition(32, 32, 16)
        got = {tuple(e) for e in grid_edges(grid, 8)}
        assert got == {(0, 1), (0, 2), (1, 3), (2, 3), (0, 3), (1, 2)}

    def test_eight_connected_count_formula(self):
        grid = partition(80, 64, 16)  # 5 x 4
        edges = grid_edges(grid, 8)
        r, c = 4, 5
        want = r * (c - 1) + c * (r - 1) + 2 * (r - 1) * (c - 1)
        assert len(edges) == want
        assert len({tuple(e) for e in edges}) == want

    def test_rejects_bad_connectivity(self):
        with pytest.raises(ValueError):
            grid_edges(partition(32, 32, 16), 6)


class TestEdgeWeight:
    def test_formula(self):
        sigma = 0.7
        want = np.exp(-1.3 / (2 * sigma**2)) * (5.0 / 2.0) ** -1 * 1.0
        np.testing.assert_allclose(
            edge_weight(1.3, sigma, 5.0, 2.0), np.exp(-1.3 / (2 * sigma**2)) * 2.0 / 5.0
        )
        np.testing.assert_allclose(edge_weight(1.3, sigma, 2.0, 5.0), want * 6.25)

    def test_degenerate_sigma_keeps_spatial_term(self):
        np.testing.assert_allclose(edge_weight(4.0, 0.0, 8.0, 2.0), 0.25)

    def test_zero_feature_distance_gives_pure_spatial(self):
        np.testing.assert_allclose(edge_weight(0.0, 1.0, 4.0, 2.0), 0.5)


class TestBuildAdjacency:
    def _graph(self, seed=3, shape=(24, 36), cell=6):
        rng = np.random.default_rng(seed)
        h, w = shape
        img = RasterImage(rng.random((h, w, 1)))
        grid = partition(w, h, cell)
        feats = compute_features(img, _fake_stacks(img, 2, seed=seed), grid)
        z, _, _ = standardize(feats)
        return grid, z, build_adjacency(grid, z)

    def test_weights_recompute_from_definition(self):
        grid, z, graph = self._graph()
        a, b = graph.edges[:, 0], graph.edges[:, 1]
        d_feat = np.linalg.norm(z.matrix[a] - z.matrix[b], axis=1)
        d_sp = np.linalg.norm(z.centroids[a] - z.centroids[b], axis=1)
        assert graph.sigma_x == pytest.approx(d_feat.std())
        assert graph.d_mean == pytest.approx(d_sp.mean())
        want = [
            edge_weight(f, graph.sigma_x, s, graph.d_mean)
            for f, s in zip(d_feat, d_sp)
        ]
        np.testing.assert_allclose(graph.weights, want, rtol=1e-12)

    def test_weights_positive(self):
        _, _, graph = self._graph(seed=5)
        assert (graph.weights > 0).all()

    def test_identical_cells_maximize_weight(self):
        # constant features: every edge weight reduces to d_mean / d_spatial
        grid = partition(32, 32, 16)
        feats = _features_from_matrix(np.zeros((4, 3)))
        feats.centroids = grid.centroids()
        graph = build_adjacency(grid, feats)
        np.testing.assert_allclose(graph.weights, 1.0)

    def test_coupling_matrix_is_symmetric(self):
        grid, _, graph = self._graph(seed=9)
        w = graph.coupling()
        assert w.shape == (grid.n_cells, grid.n_cells)
        assert (w != w.T).nnz == 0
        assert w.diagonal().sum() == 0.0
        # row sums count each incident edge once
        assert w.sum() == pytest.approx(2 * graph.weights.sum())

    def test_rejects_feature_grid_mismatch(self):
        grid = partition(32, 32, 16)
        with pytest.raises(ValueError):
            build_adjacency(grid, _features_from_matrix(np.zeros((5, 3))))
