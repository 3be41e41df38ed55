"""Instrument rendering, mixing, and batch sampling checks."""

import numpy as np
import pytest

from avsep import synthband as sb
from avsep.dsp import DspConfig, Waveform
from avsep.errors import ConfigurationError, InputError
from avsep.metrics import amplitude_ratio, harmonic_complexity, profile


@pytest.fixture(scope="module")
def catalog():
    return sb.default_catalog()


class TestRenderClip:
    def test_deterministic(self, catalog):
        a = sb.render_clip(catalog.spec(2), 123)
        b = sb.render_clip(catalog.spec(2), 123)
        assert np.array_equal(a.waveform.samples, b.waveform.samples)

    def test_different_seeds_differ(self, catalog):
        a = sb.render_clip(catalog.spec(2), 1)
        b = sb.render_clip(catalog.spec(2), 2)
        assert not np.array_equal(a.waveform.samples, b.waveform.samples)

    def test_peak_normalized(self, catalog):
        for spec in catalog:
            clip = sb.render_clip(spec, 7)
            assert np.abs(clip.waveform.samples).max() == pytest.approx(0.9)
            assert np.isfinite(clip.waveform.samples).all()

    def test_duration(self, catalog):
        clip = sb.render_clip(catalog.spec(0), 5, duration=1.5, sample_rate=8000)
        assert len(clip.waveform) == 12000

    def test_pluck_more_transient_than_sustain(self, catalog):
        # averaged over seeds, the pluck envelope has higher peak/RMS
        pluck = np.mean(
            [amplitude_ratio(sb.render_clip(catalog.by_name["plucklute"], s).waveform)
             for s in range(20)]
        )
        sustain = np.mean(
            [amplitude_ratio(sb.render_clip(catalog.by_name["reedpump"], s).waveform)
             for s in range(20)]
        )
        assert pluck > sustain

    def test_single_harmonic_sustain_low_complexity(self, catalog):
        spec = catalog.by_name["organpipe"]
        vals = [
            harmonic_complexity(sb.render_clip(spec, s).waveform) for s in range(5)
        ]
        assert np.mean(vals) < 0.05


class TestCatalogQuadrants:
    def test_four_quadrants_covered(self, catalog):
        """Class placement on the transience/complexity plane (20 seeds each)."""
        ar, hc = {}, {}
        for spec in catalog:
            profs = [
                profile(sb.render_clip(spec, s).waveform) for s in range(20)
            ]
            ar[spec.name] = np.mean([p.amplitude_ratio for p in profs])
            hcs = [p.harmonic_complexity for p in profs if p.harmonic_complexity is not None]
            hc[spec.name] = np.mean(hcs) if hcs else np.nan
        ars = np.array(list(ar.values()))
        q1, q3 = np.quantile(ars, 0.25), np.quantile(ars, 0.75)
        assert (ars >= q3).sum() >= 2
        assert (ars <= q1).sum() >= 2
        hcs = np.array([v for v in hc.values() if not np.isnan(v)])
        assert (hcs > 0.25).sum() >= 2
        assert (hcs < 0.1).sum() >= 2


class TestMakeMixture:
    def _clip(self, x, cid):
        return sb.Clip(Waveform(x, 8000), cid, 0)

    def test_mixture_with_silence_is_identity(self, catalog):
        a = sb.render_clip(catalog.spec(0), 3)
        z = self._clip(np.zeros(len(a.waveform)) + 0.0, 1)
        pair = sb.make_mixture([a, z])
        assert np.allclose(pair.mixture.samples, a.waveform.samples * pair.gain)

    def test_sum_before_rescale(self):
        rng = np.random.default_rng(0)
        x1, x2 = 0.3 * rng.uniform(-1, 1, 1000), 0.3 * rng.uniform(-1, 1, 1000)
        pair = sb.make_mixture([self._clip(x1, 0), self._clip(x2, 1)])
        assert pair.gain == 1.0
        assert np.array_equal(pair.mixture.samples, x1 + x2)

    def test_shared_rescale(self):
        x1 = np.full(100, 0.8)
        x2 = np.full(100, 0.8)
        pair = sb.make_mixture([self._clip(x1, 0), self._clip(x2, 1)])
        assert pair.gain == pytest.approx(0.99 / 1.6)
        total = pair.sources[0].waveform.samples + pair.sources[1].waveform.samples
        assert np.allclose(pair.mixture.samples, total)

    def test_energy_bound(self):
        rng = np.random.default_rng(4)
        x1, x2 = 0.4 * rng.uniform(-1, 1, 500), 0.4 * rng.uniform(-1, 1, 500)
        pair = sb.make_mixture([self._clip(x1, 0), self._clip(x2, 1)])
        e = np.sum(pair.mixture.samples**2)
        assert e <= 2 * (np.sum(x1**2) + np.sum(x2**2)) * pair.gain**2 + 1e-12

    def test_same_class_rejected(self):
        x = np.zeros(10) + 0.1
        with pytest.raises(InputError):
            sb.make_mixture([self._clip(x, 0), self._clip(x, 0)])

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            sb.make_mixture(
                [self._clip(np.ones(10) * 0.1, 0), self._clip(np.ones(20) * 0.1, 1)]
            )


class TestSampleBatch:
    def test_batch_shape_and_distinct_classes(self, catalog):
        rng = np.random.default_rng(0)
        batch = sb.sample_batch(rng, catalog, 32)
        assert len(batch) == 32
        for pair in batch:
            assert len(set(pair.class_ids)) == 2

    def test_deterministic_given_seed(self, catalog):
        b1 = sb.sample_batch(np.random.default_rng(99), catalog, 4)
        b2 = sb.sample_batch(np.random.default_rng(99), catalog, 4)
        for p1, p2 in zip(b1, b2):
            assert p1.class_ids == p2.class_ids
            assert np.array_equal(p1.mixture.samples, p2.mixture.samples)

    def test_center_crop_fixed_for_test_split(self, catalog):
        cfg = DspConfig()
        rng = np.random.default_rng(5)
        pair = sb.sample_pair(rng, catalog, cfg, split="test")
        # re-render the same clip and check the crop is the centered window
        src = pair.sources[0]
        full = sb.render_clip(catalog.spec(src.class_id), src.seed, 1.5, cfg.sample_rate)
        start = (len(full.waveform) - cfg.segment_samples) // 2
        expected = full.waveform.samples[start : start + cfg.segment_samples] * pair.gain
        assert np.allclose(src.waveform.samples, expected)

    def test_class_frequency_uniform(self, catalog):
        # chi-square style bound: each class within 5% of expectation
        rng = np.random.default_rng(123)
        ids = [s.class_id for s in catalog]
        counts = dict.fromkeys(ids, 0)
        draws = 10000
        for _ in range(draws):
            pick = rng.choice(ids, size=2, replace=False)
            for c in pick:
                counts[int(c)] += 1
        expected = draws * 2 / len(ids)
        for c, n in counts.items():
            assert abs(n - expected) / expected < 0.05

    def test_too_few_classes(self):
        solo = sb.Catalog([sb.default_catalog().spec(0)])
        with pytest.raises(ConfigurationError):
            sb.sample_batch(np.random.default_rng(0), solo, 1)

    def test_clips_never_nan_or_clipped(self, catalog):
        rng = np.random.default_rng(17)
        for pair in sb.sample_batch(rng, catalog, 8):
            for c in pair.sources + [sb.Clip(pair.mixture, -1, 0)]:
                assert np.isfinite(c.waveform.samples).all()
                assert np.abs(c.waveform.samples).max() <= 1.0


class TestCatalogIO:
    def test_round_trip(self, tmp_path, catalog):
        p = tmp_path / "cat.cfg"
        sb.save_catalog(p, catalog)
        back = sb.load_catalog(p)
        assert len(back) == len(catalog)
        for a, b in zip(catalog, back):
            assert a == b

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            sb.load_catalog(tmp_path / "nope.cfg")
