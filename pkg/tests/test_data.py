"""Tests for datasets, file formats, noise injection and synthesis."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sstats

from rog.data import (
    FeatureSet,
    NoiseSpec,
    SynthSpec,
    average_pool,
    inject_noise,
    load_feature_set,
    load_mask,
    mask_path,
    save_feature_set,
    save_mask,
    split,
    synthesize,
)
from rog.errors import (
    DimensionError,
    ParseError,
    SpecError,
    ValidationError,
)


def small_set(n=12, d=3, c=4, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureSet(
        rng.standard_normal((n, d)), rng.integers(0, c, size=n), c
    )


# ---------------------------------------------------------------------------
# FeatureSet invariants


class TestFeatureSet:
    def test_arrays_are_frozen(self):
        ds = small_set()
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0
        with pytest.raises(ValueError):
            ds.labels[0] = 1

    def test_rejects_nan(self):
        X = np.ones((3, 2))
        X[1, 0] = np.nan
        with pytest.raises(ValidationError):
            FeatureSet(X, np.zeros(3, dtype=int), 2)

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValidationError):
            FeatureSet(np.ones((3, 2)), np.array([0, 1, 2]), 2)
        with pytest.raises(ValidationError):
            FeatureSet(np.ones((3, 2)), np.array([0, -1, 1]), 2)

    def test_rejects_ragged_labels(self):
        with pytest.raises(DimensionError):
            FeatureSet(np.ones((3, 2)), np.zeros(4, dtype=int), 2)

    def test_rejects_single_class(self):
        with pytest.raises(ValidationError):
            FeatureSet(np.ones((3, 2)), np.zeros(3, dtype=int), 1)

    def test_class_indices_and_take(self):
        ds = small_set()
        rows = ds.class_indices(1)
        assert np.all(ds.labels[rows] == 1)
        sub = ds.take(rows)
        assert sub.n == rows.size
        assert np.array_equal(sub.features, ds.features[rows])


# ---------------------------------------------------------------------------
# file formats


class TestFormats:
    def test_rogf_round_trip_exact(self, tmp_path):
        ds = small_set(n=50, d=7, c=5, seed=3)
        # float32 storage: quantize first so the round trip is bit-exact
        ds32 = FeatureSet(
            ds.features.astype(np.float32).astype(np.float64),
            ds.labels,
            ds.num_classes,
        )
        path = tmp_path / "x.rogf"
        save_feature_set(ds32, path)
        back = load_feature_set(path)
        assert back.num_classes == ds32.num_classes
        assert np.array_equal(back.features, ds32.features)
        assert np.array_equal(back.labels, ds32.labels)

    def test_rogf_header_layout(self, tmp_path):
        ds = small_set(n=5, d=2, c=3)
        path = tmp_path / "x.rogf"
        save_feature_set(ds, path)
        raw = path.read_bytes()
        assert raw[:4] == b"ROGF"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:16], "little") == 5
        assert int.from_bytes(raw[16:24], "little") == 2
        assert int.from_bytes(raw[24:32], "little") == 3
        assert len(raw) == 32 + 5 * 2 * 4 + 5 * 4

    def test_rogf_bad_magic(self, tmp_path):
        path = tmp_path / "x.rogf"
        path.write_bytes(b"NOPE" + bytes(60))
        with pytest.raises(ParseError):
            load_feature_set(path)

    def test_rogf_truncated(self, tmp_path):
        ds = small_set()
        path = tmp_path / "x.rogf"
        save_feature_set(ds, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ParseError):
            load_feature_set(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_feature_set(tmp_path / "absent.rogf")

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("#d=2,C=3\n1.0,2.0,0\n3.5,-1.25,2\n")
        ds = load_feature_set(path)
        assert ds.n == 2 and ds.dim == 2 and ds.num_classes == 3
        assert np.allclose(ds.features, [[1.0, 2.0], [3.5, -1.25]])
        assert np.array_equal(ds.labels, [0, 2])

    def test_csv_ragged_row(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1.0,2.0,0\n3.5,2\n")
        with pytest.raises(DimensionError):
            load_feature_set(path)

    def test_csv_non_numeric(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1.0,abc,0\n")
        with pytest.raises(ParseError):
            load_feature_set(path)

    def test_mask_round_trip(self, tmp_path):
        mask = np.array([True, False, True, True, False])
        target = mask_path(tmp_path / "x.rogf")
        save_mask(mask, target)
        assert target.read_bytes() == b"\x01\x00\x01\x01\x00"
        back = load_mask(target, n=5)
        assert np.array_equal(back, mask)

    def test_mask_length_check(self, tmp_path):
        target = tmp_path / "m"
        save_mask(np.zeros(4, bool), target)
        with pytest.raises(ParseError):
            load_mask(target, n=5)

    @settings(max_examples=25, deadline=None)
    @given(
        feats=arrays(
            np.float32,
            st.tuples(st.integers(1, 20), st.integers(1, 5)),
            elements=st.floats(-1e6, 1e6, width=32),
        ),
        seed=st.integers(0, 100),
    )
    def test_rogf_round_trip_property(self, tmp_path_factory, feats, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 3, size=feats.shape[0])
        ds = FeatureSet(feats.astype(np.float64), labels, 3)
        path = tmp_path_factory.mktemp("rt") / "x.rogf"
        save_feature_set(ds, path)
        back = load_feature_set(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)


# ---------------------------------------------------------------------------
# noise injection


class TestNoise:
    def test_spec_validation(self):
        with pytest.raises(SpecError):
            NoiseSpec(kind="bogus", rate=0.1)
        with pytest.raises(SpecError):
            NoiseSpec(kind="uniform", rate=1.0)
        with pytest.raises(SpecError):
            NoiseSpec(kind="flip", rate=0.1, flip_map={2: 2})

    def test_zero_rate_is_identity(self):
        ds = small_set()
        out, mask = inject_noise(ds, NoiseSpec(kind="uniform", rate=0.0))
        assert out is ds
        assert not mask.any()

    def test_exact_corruption_count(self):
        ds = small_set(n=100, c=5, seed=1)
        for rate in (0.1, 0.25, 0.4):
            out, mask = inject_noise(ds, NoiseSpec(kind="uniform", rate=rate))
            assert mask.sum() == int(rate * 100)
            changed = out.labels != ds.labels
            assert np.array_equal(changed, mask)

    def test_uniform_never_keeps_label(self):
        ds = small_set(n=500, c=3, seed=2)
        out, mask = inject_noise(ds, NoiseSpec(kind="uniform", rate=0.5, seed=7))
        assert np.all(out.labels[mask] != ds.labels[mask])

    def test_uniform_distribution_chi2(self):
        # corrupted labels should be uniform over the C-1 other classes
        n, c = 20000, 10
        ds = FeatureSet(np.zeros((n, 1)), np.zeros(n, dtype=int), c)
        out, mask = inject_noise(ds, NoiseSpec(kind="uniform", rate=0.9, seed=0))
        counts = np.bincount(out.labels[mask], minlength=c)[1:]
        assert sstats.chisquare(counts).pvalue > 0.01

    def test_flip_map_applied(self):
        ds = small_set(n=200, c=4, seed=3)
        fm = {0: 1, 1: 2, 2: 3, 3: 0}
        out, mask = inject_noise(ds, NoiseSpec(kind="flip", rate=0.3, flip_map=fm))
        expect = np.array([fm[int(l)] for l in ds.labels[mask]])
        assert np.array_equal(out.labels[mask], expect)
        assert np.array_equal(out.labels[~mask], ds.labels[~mask])

    def test_flip_requires_map(self):
        ds = small_set()
        with pytest.raises(SpecError):
            inject_noise(ds, NoiseSpec(kind="flip", rate=0.5))

    def test_open_set_requires_donor(self):
        ds = small_set()
        with pytest.raises(SpecError):
            inject_noise(ds, NoiseSpec(kind="open_set", rate=0.5))

    def test_open_set_replaces_features_keeps_labels(self):
        ds = small_set(n=40, d=2, c=3, seed=4)
        donor = FeatureSet(
            np.full((40, 2), 99.0), np.zeros(40, dtype=int), 3
        )
        out, mask = inject_noise(
            ds, NoiseSpec(kind="open_set", rate=0.25), donor=donor
        )
        assert np.all(out.features[mask] == 99.0)
        assert np.array_equal(out.labels, ds.labels)
        assert np.array_equal(out.features[~mask], ds.features[~mask])

    def test_open_set_donor_exhaustion(self):
        ds = small_set(n=40, d=2, c=3)
        donor = FeatureSet(np.ones((5, 2)), np.zeros(5, dtype=int), 3)
        with pytest.raises(SpecError):
            inject_noise(ds, NoiseSpec(kind="open_set", rate=0.5), donor=donor)

    def test_open_set_dimension_mismatch(self):
        ds = small_set(n=10, d=2, c=3)
        donor = FeatureSet(np.ones((10, 3)), np.zeros(10, dtype=int), 3)
        with pytest.raises(DimensionError):
            inject_noise(ds, NoiseSpec(kind="open_set", rate=0.5), donor=donor)

    def test_determinism(self):
        ds = small_set(n=300, c=5, seed=5)
        spec = NoiseSpec(kind="uniform", rate=0.3, seed=11)
        a, ma = inject_noise(ds, spec)
        b, mb = inject_noise(ds, spec)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(ma, mb)

    @settings(max_examples=30, deadline=None)
    @given(rate=st.floats(0.0, 0.99), n=st.integers(2, 60), seed=st.integers(0, 50))
    def test_corruption_count_property(self, rate, n, seed):
        rng = np.random.default_rng(seed)
        ds = FeatureSet(
            rng.standard_normal((n, 2)), rng.integers(0, 3, size=n), 3
        )
        _, mask = inject_noise(ds, NoiseSpec(kind="uniform", rate=rate, seed=seed))
        assert mask.sum() == int(rate * n)


# ---------------------------------------------------------------------------
# synthesis


class TestSynth:
    def test_spec_validation(self):
        means = np.array([[2.0], [-2.0]])
        with pytest.raises(SpecError):
            SynthSpec(means, 1.0, np.zeros(1), 4.0, 1.0, 10)
        with pytest.raises(SpecError):
            SynthSpec(means, -1.0, np.zeros(1), 4.0, 0.1, 10)
        with pytest.raises(SpecError):
            SynthSpec(np.array([[2.0]]), 1.0, np.zeros(1), 4.0, 0.1, 10)
        with pytest.raises(DimensionError):
            SynthSpec(means, 1.0, np.zeros(2), 4.0, 0.1, 10)

    def test_counts_and_mask(self):
        spec = SynthSpec(
            np.array([[2.0, 0.0], [-2.0, 0.0]]), 1.0, np.zeros(2), 4.0,
            0.25, 400, seed=0,
        )
        ds, mask = synthesize(spec)
        assert ds.n == 800
        assert mask.sum() == 2 * (400 - int(0.75 * 400))
        assert np.array_equal(np.bincount(ds.labels), [400, 400])

    def test_clean_moments(self):
        # with delta 0 the empirical moments approach the SynthSpec parameters
        spec = SynthSpec(
            np.array([[2.0, -1.0, 0.5, 3.0], [-2.0, 1.0, -0.5, -3.0]]),
            1.0, np.zeros(4), 4.0, 0.0, 50_000, seed=1,
        )
        ds, mask = synthesize(spec)
        assert not mask.any()
        for c in range(2):
            pts = ds.features[ds.class_indices(c)]
            assert np.abs(pts.mean(axis=0) - spec.class_means[c]).max() < 0.05
            cov = np.cov(pts, rowvar=False)
            assert np.abs(cov - np.eye(4)).max() < 0.05

    def test_mixture_moments(self):
        # delta 0.25 of N(0, 4) against clean N(2, 1): mean 1.5, var 2.5
        spec = SynthSpec(
            np.array([[2.0], [-2.0]]), 1.0, np.zeros(1), 4.0, 0.25,
            100_000, seed=0,
        )
        ds, _ = synthesize(spec)
        pts = ds.features[ds.class_indices(0)][:, 0]
        assert abs(pts.mean() - 1.5) < 0.05
        assert abs(pts.var() - 2.5) < 0.1

    def test_mask_marks_outliers(self):
        spec = SynthSpec(
            np.array([[30.0], [-30.0]]), 1.0, np.zeros(1), 1.0, 0.2,
            2000, seed=2,
        )
        ds, mask = synthesize(spec)
        rows = ds.class_indices(0)
        near_zero = np.abs(ds.features[rows, 0]) < 15.0
        assert np.array_equal(near_zero, mask[rows])

    def test_determinism(self):
        spec = SynthSpec(
            np.array([[1.0], [-1.0]]), 1.0, np.zeros(1), 4.0, 0.1, 100, seed=9
        )
        a, ma = synthesize(spec)
        b, mb = synthesize(spec)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(ma, mb)

    def test_outliers_scattered_flag(self):
        means = np.array([[1.0], [-1.0]])
        assert SynthSpec(means, 1.0, np.zeros(1), 4.0, 0.1, 10).outliers_scattered
        assert not SynthSpec(means, 1.0, np.zeros(1), 0.5, 0.1, 10).outliers_scattered


# ---------------------------------------------------------------------------
# pooling and splitting


class TestPoolSplit:
    def test_average_pool_matches_mean(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal((6, 4, 3, 5))
        pooled = average_pool(t)
        assert pooled.shape == (6, 4)
        assert np.allclose(pooled, t.mean(axis=(2, 3)))

    def test_average_pool_1x1_identity(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal((6, 4, 1, 1))
        assert np.allclose(average_pool(t), t[:, :, 0, 0])

    def test_average_pool_rejects_bad_rank(self):
        with pytest.raises(DimensionError):
            average_pool(np.zeros((3, 4)))

    def test_split_disjoint_exhaustive(self):
        ds = small_set(n=50, c=3, seed=6)
        train, val = split(ds, 20, seed=1)
        assert train.n == 30 and val.n == 20
        combined = np.vstack([train.features, val.features])
        assert (
            np.sort(combined.view([("", combined.dtype)] * combined.shape[1]), axis=0)
            .view(combined.dtype)
            .shape[0]
            == 50
        )
        # every original row appears exactly once
        orig = {tuple(r) for r in ds.features}
        got = [tuple(r) for r in combined]
        assert len(got) == 50 and set(got) == orig

    def test_split_zero_validation(self):
        ds = small_set()
        train, val = split(ds, 0)
        assert train is ds and val is None

    def test_split_too_large(self):
        ds = small_set(n=10)
        with pytest.raises(SpecError):
            split(ds, 10)

    def test_split_determinism(self):
        ds = small_set(n=40, seed=7)
        a_train, a_val = split(ds, 15, seed=3)
        b_train, b_val = split(ds, 15, seed=3)
        assert np.array_equal(a_train.features, b_train.features)
        assert np.array_equal(a_val.features, b_val.features)
