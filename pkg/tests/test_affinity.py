import math

import numpy as np
import pytest

from authorclust.affinity import (
    AffinityMatrix,
    EntropyMatrix,
    ensemble_sum,
    normalize_by_controls,
    rank_links,
    score_all,
    to_affinity,
)
from authorclust.corpus import Problem
from authorclust.errors import (
    IdMismatchError,
    NoControlsError,
    ShapeMismatchError,
)
from authorclust.mhrnn import Hyperparameters, init_model
from authorclust.textprep import EncodedDoc


def doc(ids, doc_id="d"):
    return EncodedDoc(doc_id=doc_id, symbols=np.asarray(ids, np.int32))


def matrix(values, head_ids=None, text_ids=None):
    values = np.asarray(values, float)
    h, t = values.shape
    return EntropyMatrix(
        values=values,
        head_ids=head_ids or [f"h{i}" for i in range(h)],
        text_ids=text_ids or [f"t{j}" for j in range(t)])


class TestScoreAll:
    def test_zero_model_constant_matrix(self):
        k = 5
        model = init_model(k, 3, Hyperparameters(hidden_size=4, init_scale=0.0))
        docs = [doc([0, 1, 2, 3], "a"), doc([4, 0, 1], "b")]
        m = score_all(model, docs)
        np.testing.assert_allclose(m.values, math.log2(k), atol=1e-12)
        assert m.text_ids == ["a", "b"]
        assert len(m.head_ids) == 3

    def test_head_ids_passed_through(self):
        model = init_model(3, 2, Hyperparameters(hidden_size=4, seed=1))
        m = score_all(model, [doc([0, 1, 2], "x")], head_ids=["p", "q"])
        assert m.head_ids == ["p", "q"]

    def test_json_round_trip(self, tmp_path):
        model = init_model(4, 2, Hyperparameters(hidden_size=5, seed=3))
        m = score_all(model, [doc([0, 1, 2, 3], "a"), doc([1, 2], "b")])
        path = tmp_path / "matrix.json"
        m.save(path)
        back = EntropyMatrix.load(path)
        np.testing.assert_array_equal(back.values, m.values)
        assert back.head_ids == m.head_ids and back.text_ids == m.text_ids
        assert back.to_json() == m.to_json()


class TestEnsembleSum:
    def test_singleton_identity(self):
        m = matrix([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(ensemble_sum([m]).values, m.values)

    def test_five_equal_matrices(self):
        m = matrix([[1.0, 2.0], [3.0, 4.0]])
        total = ensemble_sum([m] * 5)
        np.testing.assert_allclose(total.values, 5 * m.values, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ensemble_sum([matrix([[1.0, 2.0]]), matrix([[1.0], [2.0]])])

    def test_id_mismatch(self):
        a = matrix([[1.0]], head_ids=["h"], text_ids=["t"])
        b = matrix([[1.0]], head_ids=["h"], text_ids=["other"])
        with pytest.raises(IdMismatchError):
            ensemble_sum([a, b])


class TestNormalizeByControls:
    def problem(self, ids):
        return Problem(problem_id="p", doc_ids=list(ids))

    def test_controls_equal_problem_rows_gives_zero(self):
        # heads: 2 problem docs + 1 control, all scoring identically
        values = [[1.0, 2.0], [3.0, 4.0], [1.0, 2.0]]
        m = matrix(values, head_ids=["a", "b", "c"], text_ids=["a", "b"])
        out = normalize_by_controls(m, {2}, self.problem(["a", "b"]),
                                    head_of={"a": 0, "b": 1, "c": 2})
        # control row equals problem row "a": column means are [1, 2]
        np.testing.assert_allclose(out, [[0.0, 0.0], [2.0, 2.0]], atol=1e-12)

    def test_constant_shift_control(self):
        base = np.array([[1.0, 2.0], [3.0, 4.0]])
        values = np.vstack([base, base.mean(axis=0) + 1.0])
        m = matrix(values, head_ids=["a", "b", "c"], text_ids=["a", "b"])
        out = normalize_by_controls(m, {2}, self.problem(["a", "b"]),
                                    head_of={"a": 0, "b": 1, "c": 2})
        np.testing.assert_allclose(out, base - base.mean(axis=0) - 1.0,
                                   atol=1e-12)

    def test_hand_three_by_three_two_controls(self):
        # 3 problem heads, 2 control heads, 3 texts; expectations by hand
        values = [
            [2.0, 5.0, 3.0],   # head a
            [4.0, 1.0, 6.0],   # head b
            [0.0, 2.0, 2.0],   # head c
            [1.0, 3.0, 4.0],   # control 1
            [3.0, 1.0, 0.0],   # control 2
        ]
        m = matrix(values, head_ids=["a", "b", "c", "k1", "k2"],
                   text_ids=["a", "b", "c"])
        out = normalize_by_controls(
            m, {3, 4}, self.problem(["a", "b", "c"]),
            head_of={"a": 0, "b": 1, "c": 2, "k1": 3, "k2": 4})
        # control means per text: (1+3)/2=2, (3+1)/2=2, (4+0)/2=2
        expect = np.array(values[:3]) - 2.0
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_problem_order_respected(self):
        values = [[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]]
        m = matrix(values, head_ids=["a", "b", "k"], text_ids=["a", "b"])
        out = normalize_by_controls(m, {2}, self.problem(["b", "a"]),
                                    head_of={"a": 0, "b": 1, "k": 2})
        np.testing.assert_allclose(out, [[4.0, 3.0], [2.0, 1.0]], atol=1e-12)

    def test_no_controls(self):
        m = matrix([[1.0]], head_ids=["a"], text_ids=["a"])
        with pytest.raises(NoControlsError):
            normalize_by_controls(m, set(), self.problem(["a"]),
                                  head_of={"a": 0})

    def test_column_translation_invariance(self):
        # adding c to one text's column (all heads) leaves its output
        # column unchanged: the control mean absorbs the shift
        rng = np.random.default_rng(8)
        values = rng.normal(size=(6, 4))
        ids = [f"d{j}" for j in range(4)]
        head_of = {f"d{j}": j for j in range(4)}
        prob = self.problem(ids)
        m1 = matrix(values.copy(), head_ids=ids + ["k1", "k2"], text_ids=ids)
        shifted = values.copy()
        shifted[:, 2] += 17.5
        m2 = matrix(shifted, head_ids=ids + ["k1", "k2"], text_ids=ids)
        out1 = normalize_by_controls(m1, {4, 5}, prob, head_of)
        out2 = normalize_by_controls(m2, {4, 5}, prob, head_of)
        np.testing.assert_allclose(out2[:, 2], out1[:, 2], atol=1e-12)
        np.testing.assert_allclose(out2, out1, atol=1e-12)


class TestToAffinity:
    def test_zero_matrix_gives_ones(self):
        a = to_affinity(np.zeros((3, 3)), ["a", "b", "c"])
        np.testing.assert_allclose(a.values, 1.0, atol=1e-12)

    def test_minus_one_pair(self):
        n = np.zeros((2, 2))
        n[0, 1] = n[1, 0] = -1.0
        a = to_affinity(n, ["a", "b"])
        assert a.values[0, 1] == pytest.approx(math.e ** 2, abs=1e-12)

    def test_symmetric_for_any_input(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = rng.normal(size=(5, 5))
            a = to_affinity(n, [f"d{i}" for i in range(5)])
            np.testing.assert_allclose(a.values, a.values.T, atol=0)

    def test_preserves_symmetric_rank_order(self):
        rng = np.random.default_rng(4)
        n = rng.normal(size=(6, 6))
        s = n + n.T
        a = to_affinity(n, [f"d{i}" for i in range(6)]).values
        idx = [(i, j) for i in range(6) for j in range(i + 1, 6)]
        for (i, j) in idx:
            for (k, l) in idx:
                if s[i, j] < s[k, l]:
                    assert a[i, j] > a[k, l]

    def test_lower_divergence_higher_affinity(self):
        n = np.array([[0.0, -2.0], [-2.0, 0.0]])
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        low = to_affinity(n, ["a", "b"]).values[0, 1]
        high = to_affinity(m, ["a", "b"]).values[0, 1]
        assert low > high


def affinity_from_upper(upper, n, diag=10.0):
    values = np.full((n, n), 0.0)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = upper[k]
            k += 1
    np.fill_diagonal(values, diag)
    return AffinityMatrix(values=values, doc_ids=[f"d{i}" for i in range(n)])


class TestRankLinks:
    def test_affine_map(self):
        a = affinity_from_upper([2.0, 4.0, 6.0], 3)
        links = rank_links(a)
        assert [w for _, _, w in links.links] == [1.0, 0.5, 0.0]
        assert len(links.links) == 3
        assert not links.degenerate

    def test_two_docs_single_link(self):
        a = affinity_from_upper([3.0], 2)
        links = rank_links(a)
        assert links.links == [("d0", "d1", 1.0)]
        assert links.degenerate

    def test_flat_affinities_flagged(self):
        a = affinity_from_upper([2.0, 2.0, 2.0], 3)
        links = rank_links(a)
        assert all(w == 0.5 for _, _, w in links.links)
        assert links.degenerate

    def test_monotone_transform_keeps_rank_order(self):
        rng = np.random.default_rng(5)
        upper = rng.uniform(1.0, 3.0, 15)
        a = affinity_from_upper(upper, 6)
        b = affinity_from_upper(np.exp(upper) + 7, 6)
        order_a = [(x, y) for x, y, _ in rank_links(a).links]
        order_b = [(x, y) for x, y, _ in rank_links(b).links]
        assert order_a == order_b

    def test_pair_count_invariant(self):
        rng = np.random.default_rng(6)
        for n in (2, 3, 5, 9):
            a = affinity_from_upper(rng.uniform(1, 2, n * (n - 1) // 2), n)
            assert len(rank_links(a).links) == n * (n - 1) // 2

    def test_sorted_descending_with_lexicographic_ties(self):
        values = np.array([
            [9.0, 2.0, 2.0, 5.0],
            [2.0, 9.0, 3.0, 2.0],
            [2.0, 3.0, 9.0, 2.0],
            [5.0, 2.0, 2.0, 9.0]])
        a = AffinityMatrix(values=values, doc_ids=["a", "b", "c", "d"])
        links = rank_links(a).links
        assert links[0][:2] == ("a", "d")
        assert links[1][:2] == ("b", "c")
        ties = [(x, y) for x, y, w in links if w == 0.0]
        assert ties == sorted(ties)


class TestOrderOfOperations:
    def test_raw_sum_before_exponentiation_pinned(self):
        # Control-mean subtraction is linear, so summing raw matrices and
        # normalizing equals normalizing members and summing.  The orders
        # diverge at exponentiation: summing per-member affinities is NOT
        # the pipeline.  Raw matrices are summed first, exponentiated once.
        rng = np.random.default_rng(9)
        ids = ["a", "b", "c"]
        head_of = {"a": 0, "b": 1, "c": 2}
        prob = Problem(problem_id="p", doc_ids=ids)
        members = [matrix(rng.uniform(1, 5, size=(5, 3)),
                          head_ids=ids + ["k1", "k2"], text_ids=ids)
                   for _ in range(2)]
        summed = normalize_by_controls(ensemble_sum(members), {3, 4},
                                       prob, head_of)
        per_member = [normalize_by_controls(m, {3, 4}, prob, head_of)
                      for m in members]
        np.testing.assert_allclose(summed, per_member[0] + per_member[1],
                                   atol=1e-9)
        paper_order = to_affinity(summed, ids).values
        affinity_sum = sum(to_affinity(n, ids).values for n in per_member)
        assert not np.allclose(paper_order, affinity_sum)
