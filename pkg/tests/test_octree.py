import numpy as np
import pytest

from errors import Exhausted
from octree import CubeId, Octree, child_bounds, query_cube_intersects
from query_engine import QueryWorkload, RangeQuery
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase


@pytest.fixture
def octree(small_db, small_workload):
    return Octree(small_db, small_workload, 5)


class TestGeometry:

    def test_children_tile_parent(self):
        lo, hi = np.array([0.0, 0.0, 0.0]), np.array([2.0, 4.0, 8.0])
        volumes = []
        for octant in range(1, 9):
            c_lo, c_hi = child_bounds(lo, hi, octant)
            assert np.all(c_lo >= lo) and np.all(c_hi <= hi)
            volumes.append(np.prod(c_hi - c_lo))
        assert sum(volumes) == pytest.approx(np.prod(hi - lo))
        assert child_bounds(lo, hi, 1)[0].tolist() == [0.0, 0.0, 0.0]
        assert child_bounds(lo, hi, 8)[0].tolist() == [1.0, 2.0, 4.0]

    def test_closed_box_intersection(self):
        lo, hi = np.zeros(3), np.ones(3)
        assert query_cube_intersects(RangeQuery(1, 2, 0, 1, 0, 1), lo, hi)
        assert not query_cube_intersects(RangeQuery(1.5, 2, 0, 1, 0, 1), lo, hi)

    def test_cube_id_path(self):
        assert CubeId(1, ()).child(3).child(8) == CubeId(3, (3, 8))


class TestOctree:

    def test_child_counts_sum_to_parent(self, octree):
        for nodes in octree.levels[:-1]:
            for node in nodes:
                assert sum(child.n_b for child in node.children.values()) == node.n_b
                assert node.m_b >= 1
                assert max(child.m_b for child in node.children.values()) <= node.m_b
                assert max(child.q_b for child in node.children.values()) <= node.q_b

    def test_root_statistics(self, octree, small_db, small_workload):
        assert octree.root.n_b == small_db.N
        assert octree.root.m_b == small_db.M
        assert octree.root.q_b == len(small_workload)
        assert octree.root.remaining == small_db.N - 2 * small_db.M

    def test_locate_consistency(self, octree, small_db):
        for gid in range(small_db.N):
            point = small_db.points[gid]
            previous = None
            for level in range(1, octree.depth + 1):
                node = octree.locate(gid, level)
                assert node.level == level
                assert np.all(node.lo <= point) and np.all(point <= node.hi)
                assert gid in node.members
                assert node.parent is previous
                previous = node

    def test_node_lookup(self, octree):
        for node in octree.levels[-1]:
            assert octree.node(node.cube_id) is node

    def test_deterministic_rebuild(self, small_db, small_workload, octree):
        rebuilt = Octree(small_db, small_workload, 5)
        for a_nodes, b_nodes in zip(octree.levels, rebuilt.levels):
            assert [(n.cube_id, n.n_b, n.m_b, n.q_b) for n in a_nodes] == \
                   [(n.cube_id, n.n_b, n.m_b, n.q_b) for n in b_nodes]

    def test_depth_must_be_at_least_two(self, small_db, small_workload):
        with pytest.raises(ValueError):
            Octree(small_db, small_workload, 1)

    def test_cube_state(self, octree):
        for node in octree.levels[2]:
            state = octree.cube_state(node)
            assert state.shape == (16,)
            assert np.all((state >= 0.0) & (state <= 1.0))
            assert state[0::2].sum() >= 1.0 - 1e-12

    def test_cube_state_by_id(self, octree):
        for node in octree.levels[3]:
            assert np.array_equal(octree.cube_state(node.cube_id), octree.cube_state(node))
        with pytest.raises(KeyError):
            octree.cube_state(CubeId(9, (1,) * 8))


class TestRemainingCounters:

    def test_mark_inserted_walks_the_path(self, octree, small_db):
        gid = small_db.global_id(0, 1)
        leaf = octree.locate(gid, octree.depth)
        before = [octree.locate(gid, level).remaining for level in range(1, octree.depth + 1)]
        octree.mark_inserted(gid)
        after = [octree.locate(gid, level).remaining for level in range(1, octree.depth + 1)]
        assert [b - a for b, a in zip(before, after)] == [1] * octree.depth
        assert leaf.remaining == before[-1] - 1

    def test_reset_against_view(self, octree, small_db):
        view = SimplifiedDatabase.endpoints_only(small_db, small_db.N)
        view.insert(0, 1)
        view.insert(1, 2)
        octree.reset(view)
        assert octree.root.remaining == small_db.N - view.total


class TestStartCubeSampling:

    def test_sampled_cube_has_candidates(self, octree):
        rng = np.random.default_rng(0)
        for _ in range(50):
            node = octree.sample_start_cube(3, rng)
            assert node.level == 3
            assert node.remaining > 0

    def test_no_queries_falls_back_to_points(self, small_db):
        tree = Octree(small_db, QueryWorkload([]), 4)
        node = tree.sample_start_cube(2, np.random.default_rng(1))
        assert node.remaining > 0 and node.q_b == 0

    def test_exhausted(self, octree, small_db):
        octree.reset(SimplifiedDatabase.full(small_db))
        with pytest.raises(Exhausted):
            octree.sample_start_cube(2, np.random.default_rng(0))

    def test_equal_query_weights_split_evenly(self, octree):
        eligible = [node for node in octree.levels[2] if node.remaining > 0]
        assert len(eligible) >= 2
        for node in octree.levels[2]:
            node.q_b = 0
        first, second = eligible[:2]
        first.q_b = second.q_b = 5
        rng = np.random.default_rng(123)
        picks = [octree.sample_start_cube(3, rng) for _ in range(10000)]
        share = sum(node is first for node in picks) / len(picks)
        assert share == pytest.approx(0.5, abs=0.05)
        assert all(node is first or node is second for node in picks)

    def test_invalid_level(self, octree):
        with pytest.raises(ValueError):
            octree.sample_start_cube(0, np.random.default_rng(0))


class TestOctantAssignment:

    @staticmethod
    def _database(extra=()):
        rows = [[(0.0, 0.0, 0.0), (4.0, 4.0, 4.0)]]
        for o in range(1, 9):
            bits = [(o - 1) >> axis & 1 for axis in range(3)]
            cx, cy, ct = (1.0 + 2.0 * b for b in bits)
            rows.append([(cx, cy, ct), (cx, cy, ct + 0.1)])
        rows.extend(extra)
        return TrajectoryDatabase([Trajectory(f"T{i}", np.array(r)) for i, r in enumerate(rows)])

    def test_octant_centers_land_in_distinct_children(self):
        db = self._database()
        tree = Octree(db, QueryWorkload([]), 2)
        assert sorted(tree.root.children) == list(range(1, 9))
        for o in range(1, 9):
            node = tree.locate(db.global_id(o, 0), 2)
            assert node.cube_id == CubeId(2, (o,))
            assert node.m_b == (2 if o in (1, 8) else 1)

    def test_split_plane_ties_go_to_the_lower_octant(self):
        root = Octree(self._database(), QueryWorkload([]), 2).root
        mid = (root.lo + root.hi) / 2.0
        tie = [(mid[0], mid[1], mid[2]), (0.5, 0.5, mid[2] + 0.5)]
        db = self._database([tie])
        tree = Octree(db, QueryWorkload([]), 2)
        assert np.array_equal(tree.root.lo, root.lo) and np.array_equal(tree.root.hi, root.hi)
        assert tree.locate(db.global_id(db.M - 1, 0), 2).cube_id == CubeId(2, (1,))
        assert tree.locate(db.global_id(db.M - 1, 1), 2).cube_id == CubeId(2, (5,))
