"""Parameterization, samplers, and file formats."""
import numpy as np
import pytest
from scipy.stats import chisquare, poisson

from labelsbm import (GwTree, LabeledGraph, LabelModel, SbmParams, dtv_labels,
                      params_from_scaling, read_graph, sample_gw_tree, sample_sbm,
                      validate_balance, write_graph)
from labelsbm.model import parse_preset, sample_labels


class TestScaling:
    def test_symmetric_case(self):
        sp = params_from_scaling(0.5, 0.8, 0.2, 10**5)
        assert sp.a == pytest.approx(1.2, abs=1e-15)
        assert sp.b == pytest.approx(0.8, abs=1e-15)
        assert sp.c == pytest.approx(1.2, abs=1e-15)
        assert sp.d == pytest.approx(20.0, abs=1e-12)

    def test_asymmetric_case(self):
        sp = params_from_scaling(0.05, 0.8, 0.1, 10**6)
        assert sp.a == pytest.approx(2.9, abs=1e-12)
        assert sp.b == pytest.approx(0.9, abs=1e-15)
        assert sp.c == pytest.approx(1.0052631578947369, abs=1e-12)
        assert sp.d == pytest.approx(80.0, rel=1e-12)

    def test_epsilon_above_one_rejected(self):
        with pytest.raises(ValueError):
            params_from_scaling(0.5, 0.8, 1.5, 10**5)

    def test_density_needs_enough_vertices(self):
        with pytest.raises(ValueError):
            params_from_scaling(0.5, 0.8, 0.2, 10)   # d*a/n > 1

    def test_balance_holds_by_construction(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.uniform(0.05, 0.95)
            lam = rng.uniform(0.1, 2.0)
            eps = rng.uniform(0.05, 0.9)
            sp = params_from_scaling(p, lam, eps, 10**7)
            assert validate_balance(sp.p, sp.a, sp.b, sp.c)


class TestBalance:
    def test_examples(self):
        assert validate_balance(0.5, 1.2, 0.8, 1.2)
        assert not validate_balance(0.5, 2, 1, 2)
        assert validate_balance(0.05, 2.9, 0.9, 1.0052631578947369)

    def test_sbm_params_reject_unbalanced(self):
        with pytest.raises(ValueError):
            SbmParams(p=0.5, a=2, b=1, c=2, d=5, n=1000)


class TestLabelModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            LabelModel(("a", "a"), (0.5, 0.5), (0.5, 0.5))
        with pytest.raises(ValueError):
            LabelModel(("a", "b"), (0.6, 0.5), (0.5, 0.5))
        with pytest.raises(ValueError):
            LabelModel(("a", "b"), (1.1, -0.1), (0.5, 0.5))
        with pytest.raises(ValueError):
            LabelModel((), (), ())

    def test_presets(self):
        lm = parse_preset("noisy:0.85")
        assert np.allclose(lm.mu, [0.85, 0.15]) and np.allclose(lm.nu, [0.15, 0.85])
        lm = parse_preset("revealed:0.3")
        assert np.allclose(lm.mu, [0.3, 0.0, 0.7]) and np.allclose(lm.nu, [0.0, 0.3, 0.7])
        with pytest.raises(ValueError):
            parse_preset("bogus:0.5")

    def test_json_round_trip(self, tmp_path):
        lm = LabelModel.revealed(0.25)
        path = tmp_path / "lm.json"
        lm.save(path)
        back = LabelModel.load(path)
        assert back.labels == lm.labels
        assert np.array_equal(back.mu, lm.mu) and np.array_equal(back.nu, lm.nu)


class TestDtv:
    def test_examples(self):
        assert dtv_labels(LabelModel.noisy(0.5)) == 0.0
        assert dtv_labels(LabelModel.noisy(0.85)) == pytest.approx(0.7, abs=1e-15)
        point = LabelModel(("a", "b"), (1.0, 0.0), (0.0, 1.0))
        assert dtv_labels(point) == 1.0

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = rng.integers(2, 6)
            dists = [rng.dirichlet(np.ones(k)) for _ in range(3)]
            names = tuple(f"l{i}" for i in range(k))
            def d(x, y):
                return dtv_labels(LabelModel(names, x, y))
            assert d(dists[0], dists[1]) == pytest.approx(d(dists[1], dists[0]), abs=1e-15)
            assert d(dists[0], dists[2]) <= d(dists[0], dists[1]) + d(dists[1], dists[2]) + 1e-12


class TestSampleLabels:
    def test_zero_mass_labels_never_drawn(self):
        rng = np.random.default_rng(5)
        out = sample_labels(rng, np.array([0.5, 0.0, 0.5]), 200_000)
        assert not np.any(out == 1)
        freq = np.bincount(out, minlength=3) / len(out)
        assert abs(freq[0] - 0.5) < 4 * np.sqrt(0.25 / len(out))


class TestSampleSbm:
    def test_single_vertex(self):
        params = SbmParams(p=0.5, a=1.0, b=1.0, c=1.0, d=0.5, n=1)
        g = sample_sbm(params, LabelModel.noisy(0.85), 0)
        assert g.n == 1 and g.m == 0 and g.spins.shape == (1,) and g.labels.shape == (1,)

    def test_mean_degree_and_spin_fraction(self):
        params = params_from_scaling(0.5, 0.8, 0.2, 10**5)
        g = sample_sbm(params, LabelModel.noisy(0.85), 42)
        mean_deg = 2 * g.m / g.n
        # m is a sum of independent Bernoullis: sd(mean degree) ~ 2 sqrt(E m)/n
        sd = 2 * np.sqrt(10.0 * g.n) / g.n
        assert abs(mean_deg - 20.0) < 3 * sd
        frac = np.mean(g.spins == 1)
        assert abs(frac - 0.5) < 3 * 0.5 / np.sqrt(g.n)

    def test_block_edge_counts(self):
        params = params_from_scaling(0.3, 0.8, 0.25, 30_000)
        g = sample_sbm(params, LabelModel.noisy(0.85), 7)
        su, sv = g.spins[g.edges[:, 0]], g.spins[g.edges[:, 1]]
        n_p = int(np.sum(g.spins == 1))
        n_m = g.n - n_p
        q_pp, q_pm, q_mm = params.edge_probs()
        cases = [
            (int(np.sum((su == 1) & (sv == 1))), n_p * (n_p - 1) // 2, q_pp),
            (int(np.sum(su != sv)), n_p * n_m, q_pm),
            (int(np.sum((su == -1) & (sv == -1))), n_m * (n_m - 1) // 2, q_mm),
        ]
        for observed, pairs, q in cases:
            mean, sd = pairs * q, np.sqrt(pairs * q * (1 - q))
            assert abs(observed - mean) < 4 * sd

    def test_degree_distribution_poisson(self):
        # mixture collapses to Poisson(d) because both communities share mean d
        params = params_from_scaling(0.5, 0.8, 0.2, 10**5)
        g = sample_sbm(params, LabelModel.noisy(0.85), 11)
        deg = g.degrees()
        edges = np.arange(20)
        counts = np.histogram(deg, bins=np.concatenate([edges, [10**9]]))[0]
        probs = poisson.pmf(edges[:-1], 20.0)
        expected = np.concatenate([probs, [poisson.pmf(19, 20) + poisson.sf(19, 20)]]) * g.n
        # merge leading bins with tiny expectation to keep the test valid
        keep = expected >= 5
        obs = np.concatenate([[counts[~keep].sum()], counts[keep]])
        exp = np.concatenate([[expected[~keep].sum()], expected[keep]])
        stat, pvalue = chisquare(obs, exp * obs.sum() / exp.sum())
        assert pvalue > 0.001

    def test_point_mass_labels_reveal_spins(self):
        point = LabelModel(("a", "b"), (1.0, 0.0), (0.0, 1.0))
        params = params_from_scaling(0.4, 0.8, 0.3, 5000)
        g = sample_sbm(params, point, 1)
        assert np.array_equal(g.labels == 0, g.spins == 1)

    def test_determinism_and_seed_sensitivity(self):
        params = params_from_scaling(0.5, 0.8, 0.3, 3000)
        lm = LabelModel.noisy(0.85)
        g1 = sample_sbm(params, lm, 9)
        g2 = sample_sbm(params, lm, 9)
        g3 = sample_sbm(params, lm, 10)
        assert np.array_equal(g1.edges, g2.edges)
        assert np.array_equal(g1.labels, g2.labels)
        assert np.array_equal(g1.spins, g2.spins)
        assert not np.array_equal(g1.edges, g3.edges)

    def test_graph_validation(self):
        with pytest.raises(ValueError):
            LabeledGraph(n=3, edges=[[0, 0]], labels=[0, 0, 0])
        with pytest.raises(ValueError):
            LabeledGraph(n=3, edges=[[0, 1], [1, 0]], labels=[0, 0, 0])
        with pytest.raises(ValueError):
            LabeledGraph(n=3, edges=[[0, 5]], labels=[0, 0, 0])
        with pytest.raises(ValueError):
            LabeledGraph(n=3, edges=[[0, 1]], labels=[0, 0, 2], n_labels=2)
        with pytest.raises(ValueError):
            LabeledGraph(n=3, edges=[[0, 1]], labels=[0, 0, 0], spins=[1, 2, 1])


class TestGwTree:
    def test_depth_zero(self):
        params = params_from_scaling(0.5, 0.8, 0.2, 10**5)
        t = sample_gw_tree(params, LabelModel.noisy(0.85), 0, "+", 0)
        assert t.n_nodes == 1 and t.max_depth == 0 and t.spin[0] == 1

    def test_offspring_mean(self):
        params = params_from_scaling(0.5, 0.8, 0.2, 10**5)
        lm = LabelModel.noisy(0.85)
        rng = np.random.default_rng(4)
        counts = [np.sum(sample_gw_tree(params, lm, 1, "prior", rng).depth == 1)
                  for _ in range(10_000)]
        mean = np.mean(counts)
        assert abs(mean - 20.0) < 3 * np.sqrt(20.0 / len(counts))

    def test_child_spin_kernel_frequencies(self):
        params = params_from_scaling(0.3, 0.8, 0.25, 10**5)
        lm = LabelModel.noisy(0.85)
        kernel = params.child_spin_kernel()
        assert np.allclose(kernel.sum(axis=1), 1.0, atol=1e-12)
        rng = np.random.default_rng(8)
        trans = np.zeros((2, 2))
        for _ in range(300):
            t = sample_gw_tree(params, lm, 3, "prior", rng)
            child = t.parent >= 0
            pa = t.spin[t.parent[child]]
            ch = t.spin[child]
            for i, s in enumerate((1, -1)):
                for j, cs in enumerate((1, -1)):
                    trans[i, j] += np.sum((pa == s) & (ch == cs))
        rows = trans.sum(axis=1)
        for i in range(2):
            phat = trans[i, 0] / rows[i]
            sd = np.sqrt(kernel[i, 0] * (1 - kernel[i, 0]) / rows[i])
            assert abs(phat - kernel[i, 0]) < 3 * sd

    def test_spin_marginal_stationary(self):
        # the balance constraint makes (p, 1-p) stationary for the kernel
        p = 0.3
        params = params_from_scaling(p, 0.8, 0.25, 10**5)
        lm = LabelModel.noisy(0.85)
        rng = np.random.default_rng(15)
        for depth_checked in (1, 2, 3):
            devs, sizes = [], []
            for _ in range(400):
                t = sample_gw_tree(params, lm, 3, "prior", rng)
                at = t.depth == depth_checked
                devs.append(np.sum(t.spin[at] == 1) - p * np.sum(at))
                sizes.append(np.sum(at))
            devs = np.array(devs, dtype=float)
            se = devs.std(ddof=1) / np.sqrt(len(devs))
            assert abs(devs.mean()) < 4 * se + 1e-9

    def test_node_cap_refusal(self):
        params = params_from_scaling(0.5, 0.8, 0.01, 10**9)   # d = 8000
        with pytest.raises(ValueError, match="cap"):
            sample_gw_tree(params, LabelModel.noisy(0.85), 3, "+", 0)

    def test_determinism(self):
        params = params_from_scaling(0.5, 0.8, 0.3, 3000)
        lm = LabelModel.noisy(0.85)
        t1 = sample_gw_tree(params, lm, 3, "prior", 2)
        t2 = sample_gw_tree(params, lm, 3, "prior", 2)
        assert np.array_equal(t1.parent, t2.parent)
        assert np.array_equal(t1.spin, t2.spin)
        assert np.array_equal(t1.label, t2.label)

    def test_to_graph(self):
        params = params_from_scaling(0.5, 0.8, 0.3, 3000)
        t = sample_gw_tree(params, LabelModel.noisy(0.85), 2, "+", 3)
        g = t.to_graph(2)
        assert g.n == t.n_nodes and g.m == t.n_nodes - 1


class TestGraphFiles:
    def _graph(self, with_spins):
        params = params_from_scaling(0.5, 0.8, 0.3, 500)
        g = sample_sbm(params, LabelModel.noisy(0.85), 21)
        if not with_spins:
            g = LabeledGraph(n=g.n, edges=g.edges, labels=g.labels, n_labels=g.n_labels)
        return g

    @pytest.mark.parametrize("with_spins", [True, False])
    def test_round_trip(self, tmp_path, with_spins):
        g = self._graph(with_spins)
        path = tmp_path / "g.txt"
        write_graph(path, g)
        back = read_graph(path)
        assert back.n == g.n and back.n_labels == g.n_labels
        assert np.array_equal(back.edges, g.edges)
        assert np.array_equal(back.labels, g.labels)
        if with_spins:
            assert np.array_equal(back.spins, g.spins)
        else:
            assert back.spins is None

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 1 2\n0 1\n0 1\n")   # one label line missing
        with pytest.raises(ValueError):
            read_graph(path)
