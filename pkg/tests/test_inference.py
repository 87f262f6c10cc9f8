import math

import numpy as np
import pytest

from volquant.errors import SolverError
from volquant.inference import (
    Band,
    BootstrapConfig,
    bootstrap_fit,
    confidence_bands,
    intersect_bands,
    resample_counts,
)
from volquant.panelqr import DEFAULT_TAUS, PanelDataset
from volquant.rng import make_rng
from volquant.synth import SynthSpec, generate_panel


@pytest.fixture(scope="module")
def small():
    return generate_panel(SynthSpec(n_assets=3, n_days=80, seed=3)).dataset


class TestConfig:
    @pytest.mark.parametrize("kw", [{"replicates": 1}, {"confidence_level": 1.0},
                                    {"confidence_level": 0.0}, {"block_length": 0},
                                    {"scheme": "wild"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            BootstrapConfig(**kw)

    def test_defaults(self):
        cfg = BootstrapConfig()
        assert (cfg.replicates, cfg.confidence_level, cfg.block_length) == (1000, 0.95, 1)


class TestResampling:
    def test_counts_sum_to_dates(self):
        rng = make_rng(0)
        for L in (1, 3, 7, 500):
            c = resample_counts(50, rng, L)
            assert c.sum() == 50 and c.shape == (50,)

    def test_blocks_are_contiguous(self):
        c = resample_counts(10, make_rng(1), 10)
        assert np.all(c == 1)


class TestBootstrap:
    def test_report_fields(self, small):
        rep = bootstrap_fit(small, 0.5, BootstrapConfig(replicates=30, seed=1))
        assert rep.names == small.param_names
        for p in rep.params:
            assert p.std_error > 0
            assert p.t_stat == pytest.approx(p.estimate / p.std_error)
            assert p.lower <= p.upper
        b = rep["beta[rv_sqrt]"]
        assert b.std_error == pytest.approx(np.std(rep.replicates[:, -1], ddof=1))
        assert b.lower == pytest.approx(np.quantile(rep.replicates[:, -1], 0.025))

    def test_deterministic(self, small):
        cfg = BootstrapConfig(replicates=20, seed=42)
        a, b = bootstrap_fit(small, 0.9, cfg), bootstrap_fit(small, 0.9, cfg)
        assert a.to_dict() == b.to_dict()
        assert np.array_equal(a.replicates, b.replicates)
        c = bootstrap_fit(small, 0.9, BootstrapConfig(replicates=20, seed=43))
        assert not np.array_equal(a.replicates, c.replicates)

    def test_parallel_matches_serial(self, small):
        a = bootstrap_fit(small, 0.25, BootstrapConfig(replicates=6, seed=5))
        b = bootstrap_fit(small, 0.25, BootstrapConfig(replicates=6, seed=5, n_jobs=2))
        assert np.array_equal(a.replicates, b.replicates)

    def test_se_invariant_to_replicate_order(self, small):
        rep = bootstrap_fit(small, 0.5, BootstrapConfig(replicates=25, seed=2))
        perm = np.random.default_rng(0).permutation(25)
        se = rep.replicates[perm].std(axis=0, ddof=1)
        assert np.allclose(se, [p.std_error for p in rep.params], rtol=1e-12)

    def test_identical_replicates_give_missing_t(self):
        # one date: every resample is that date, so every replicate equals the fit
        T = 1
        y = np.array([[0.1, 0.2, 0.3, 0.4, 0.5]])
        d = PanelDataset(("A",), np.array(["2011-01-03"], dtype="datetime64[D]"),
                         np.zeros((T, 1)), np.zeros((T, 1, 0)), ())
        del y
        with pytest.raises(Exception):
            bootstrap_fit(d, 0.5, BootstrapConfig(replicates=2))
        d = PanelDataset(("A", "B"), np.array(["2011-01-03", "2011-01-04"], dtype="datetime64[D]"),
                         np.array([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 2, 0)), ())
        rep = bootstrap_fit(d, 0.5, BootstrapConfig(replicates=2))
        for p in rep.params:
            assert p.std_error == 0.0 and math.isnan(p.t_stat)
        assert rep.to_dict()["params"][0]["t_stat"] is None

    def test_redraw_cap(self, monkeypatch, small):
        import volquant.inference as inf

        def boom(*a, **k):
            raise SolverError("forced")

        monkeypatch.setattr(inf, "fit_panel_qr", boom)
        fit = __import__("volquant.panelqr", fromlist=["fit_panel_qr"]).fit_panel_qr(small, 0.5)
        with pytest.raises(SolverError, match="failed"):
            bootstrap_fit(small, 0.5, BootstrapConfig(replicates=2), fit=fit)

    def test_redraw_recovers(self, monkeypatch, small):
        import volquant.inference as inf

        real = inf.fit_panel_qr
        calls = {"n": 0}

        def flaky(*a, **k):
            calls["n"] += 1
            if calls["n"] == 2:
                raise SolverError("once")
            return real(*a, **k)

        monkeypatch.setattr(inf, "fit_panel_qr", flaky)
        rep = bootstrap_fit(small, 0.5, BootstrapConfig(replicates=4, seed=0))
        assert rep.redraws == 1


class TestBands:
    def make(self, lo, hi, taus=(0.5,)):
        return Band(tuple(taus), np.atleast_1d(np.array(lo, float)), np.atleast_1d(np.array(hi, float)))

    def test_intersection(self):
        band = intersect_bands(self.make(-1, 1), self.make(0, 2))
        assert (band.lower[0], band.upper[0]) == (0, 1) and not band.empty[0]

    def test_disjoint_flagged(self):
        assert intersect_bands(self.make(-2, -1), self.make(1, 2)).empty[0]

    def test_idempotent(self):
        b = self.make([-1, 0], [1, 2], (0.1, 0.9))
        i = intersect_bands(b, b)
        assert np.array_equal(i.lower, b.lower) and np.array_equal(i.upper, b.upper)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            intersect_bands(self.make(0, 1, (0.1,)), self.make(0, 1, (0.2,)))
        with pytest.raises(ValueError):
            intersect_bands()

    def test_confidence_bands(self, small):
        reps = [bootstrap_fit(small, t, BootstrapConfig(replicates=15, seed=1)) for t in (0.9, 0.1)]
        bands = confidence_bands(reps)
        b = bands["beta[rv_sqrt]"]
        assert b.taus == (0.1, 0.9)
        assert b.lower[1] == reps[0]["beta[rv_sqrt]"].lower
        single = confidence_bands(reps[:1])["beta[rv_sqrt]"]
        assert single.lower[0] == reps[0]["beta[rv_sqrt]"].lower
        assert single.upper[0] == reps[0]["beta[rv_sqrt]"].upper

    def test_mismatched_parameters(self, small):
        a = bootstrap_fit(small, 0.5, BootstrapConfig(replicates=5))
        b = bootstrap_fit(small.select_assets(["A01", "A02"]), 0.6, BootstrapConfig(replicates=5))
        with pytest.raises(ValueError):
            confidence_bands([a, b])

    def test_subsample_intersection_inside_each(self):
        sp = generate_panel(SynthSpec(n_assets=3, n_days=240, seed=8))
        d = sp.dataset
        parts = [d.take(slice(0, 120)), d.take(slice(120, 240)), d]
        bands = [confidence_bands([bootstrap_fit(p, t, BootstrapConfig(replicates=40, seed=3))
                                   for t in (0.05, 0.5, 0.95)])["beta[rv_sqrt]"] for p in parts]
        inter = intersect_bands(*bands)
        for b in bands:
            ok = ~inter.empty
            assert np.all(inter.lower[ok] >= b.lower[ok]) and np.all(inter.upper[ok] <= b.upper[ok])

    def test_gaussian_band_covers_truth(self):
        sp = generate_panel(SynthSpec(n_assets=4, n_days=300, seed=12))
        reps = [bootstrap_fit(sp.dataset, t, BootstrapConfig(replicates=60, seed=7)) for t in DEFAULT_TAUS]
        band = confidence_bands(reps)["beta[rv_sqrt]"]
        truth = [sp.true_beta(t) for t in DEFAULT_TAUS]
        assert band.contains(truth).sum() >= 6
