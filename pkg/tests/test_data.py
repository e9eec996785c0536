import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privfit.data import (
    CsvFormatError,
    Dataset,
    SyntheticSpec,
    biased_success_probabilities,
    generate,
    read_csv,
    split_folds,
    write_csv,
)
from privfit.rng import RandomStream


def test_biased_probabilities_paper_values():
    # p=0.5, b=0.05 -> 0.5*0.55 and 0.5*0.45
    plus, minus = biased_success_probabilities(0.5, 0.05)
    assert plus == pytest.approx(0.275)
    assert minus == pytest.approx(0.225)


class TestSpecValidation:
    def test_rejects_odd_n(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=101)

    def test_rejects_bad_bias(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=100, b=0.6)

    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=100, p=1.5)

    def test_rejects_noise_count_above_attr_count(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=100, attr_count=10, noise_attr_count=11)


class TestGenerate:
    def test_labels_alternate_and_balance(self):
        ds = generate(SyntheticSpec(n=1000), RandomStream(1).fork(0))
        assert np.array_equal(ds.labels[:4], [1, -1, 1, -1])
        assert (ds.labels == 1).sum() == 500
        assert (ds.labels == -1).sum() == 500

    def test_one_hot_encoding(self):
        ds = generate(SyntheticSpec(n=4), RandomStream(1))
        one_hot = ds.one_hot_labels()
        assert np.array_equal(one_hot[0], [0.0, 1.0])  # label +1
        assert np.array_equal(one_hot[1], [1.0, 0.0])  # label -1
        assert np.array_equal(ds.record(0).one_hot, [0.0, 1.0])

    def test_biased_attribute_means(self):
        # pooled over n/2 * 100 biased cells per class: 0.275 +/- 3*sqrt(pq/1e6)
        spec = SyntheticSpec(n=20_000, p=0.5, b=0.05)
        ds = generate(spec, RandomStream(20).fork(0))
        biased = ds.attributes[:, spec.noise_attr_count :].astype(float)
        plus_mean = biased[ds.labels == 1].mean()
        minus_mean = biased[ds.labels == -1].mean()
        se = np.sqrt(0.275 * 0.725 / 1e6)
        assert abs(plus_mean - 0.275) <= 3 * se
        assert abs(minus_mean - 0.225) <= 3 * np.sqrt(0.225 * 0.775 / 1e6)

    def test_per_attribute_means_within_4se(self):
        spec = SyntheticSpec(n=10_000)
        ds = generate(spec, RandomStream(33))
        attrs = ds.attributes.astype(float)
        noise_means = attrs[:, : spec.noise_attr_count].mean(axis=0)
        se = np.sqrt(0.5 * 0.5 / spec.n)
        assert np.all(np.abs(noise_means - 0.5) <= 4 * se)
        for label, p_target in ((1, 0.275), (-1, 0.225)):
            sub = attrs[ds.labels == label][:, spec.noise_attr_count :]
            se = np.sqrt(p_target * (1 - p_target) / sub.shape[0])
            assert np.all(np.abs(sub.mean(axis=0) - p_target) <= 4 * se)

    def test_zero_bias_removes_class_signal(self):
        spec = SyntheticSpec(n=20_000, b=0.0)
        ds = generate(spec, RandomStream(3))
        biased = ds.attributes[:, spec.noise_attr_count :].astype(float)
        plus_mean = biased[ds.labels == 1].mean()
        minus_mean = biased[ds.labels == -1].mean()
        # both classes now draw from Bernoulli(p/2)
        se = np.sqrt(0.25 * 0.75 / 1e6)
        assert abs(plus_mean - minus_mean) <= 4 * np.sqrt(2) * se

    def test_deterministic_given_stream(self):
        spec = SyntheticSpec(n=500)
        a = generate(spec, RandomStream(9).fork(4))
        b = generate(spec, RandomStream(9).fork(4))
        assert a == b

    def test_chunking_does_not_change_draws(self, monkeypatch):
        import privfit.data as data_mod

        spec = SyntheticSpec(n=600)
        whole = generate(spec, RandomStream(5))
        monkeypatch.setattr(data_mod, "_GEN_CHUNK_ROWS", 100)
        chunked = generate(spec, RandomStream(5))
        assert whole == chunked


class TestSplitFolds:
    def test_ten_folds_of_ten(self):
        ds = generate(SyntheticSpec(n=100), RandomStream(1))
        folds = split_folds(ds, 10)
        assert len(folds) == 10
        for fold in folds:
            assert len(fold) == 10
            assert (ds.labels[fold] == 1).sum() == 5
            assert (ds.labels[fold] == -1).sum() == 5

    def test_single_fold_is_whole_dataset(self):
        ds = generate(SyntheticSpec(n=50 * 2), RandomStream(1))
        folds = split_folds(ds, 1)
        assert len(folds) == 1
        assert np.array_equal(folds.folds[0], np.arange(100))

    def test_folds_disjoint_and_cover(self):
        ds = generate(SyntheticSpec(n=120), RandomStream(2))
        folds = split_folds(ds, 6)
        combined = np.sort(np.concatenate(folds.folds))
        assert np.array_equal(combined, np.arange(120))

    def test_paper_scale_fold_size(self):
        # labels alternate; attributes don't matter for the split
        n = 1_000_000
        labels = np.where(np.arange(n) % 2 == 0, 1, -1).astype(np.int8)
        ds = Dataset(np.zeros((n, 1), dtype=np.uint8), labels)
        folds = split_folds(ds, 10)
        assert all(len(fold) == 100_000 for fold in folds)

    def test_rejects_indivisible(self):
        ds = generate(SyntheticSpec(n=100), RandomStream(1))
        with pytest.raises(ValueError):
            split_folds(ds, 3)

    def test_rejects_odd_fold_size(self):
        ds = generate(SyntheticSpec(n=30), RandomStream(1))
        with pytest.raises(ValueError):
            split_folds(ds, 10)  # fold size 3
        with pytest.raises(ValueError):
            split_folds(generate(SyntheticSpec(n=6), RandomStream(1)), 2)

    def test_deterministic(self):
        ds = generate(SyntheticSpec(n=200), RandomStream(4))
        first = split_folds(ds, 10)
        second = split_folds(ds, 10)
        for a, b in zip(first, second):
            assert np.array_equal(a, b)


class TestCsvRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        ds = generate(SyntheticSpec(n=50), RandomStream(6))
        path = tmp_path / "ds.csv"
        write_csv(ds, path)
        assert read_csv(path) == ds

    def test_empty_dataset(self, tmp_path):
        ds = Dataset(np.empty((0, 200), dtype=np.uint8), np.empty(0, dtype=np.int8))
        path = tmp_path / "empty.csv"
        write_csv(ds, path)
        content = path.read_text().splitlines()
        assert len(content) == 1
        assert content[0].startswith("a1,") and content[0].endswith(",label")
        back = read_csv(path)
        assert len(back) == 0
        assert back.attr_count == 200

    def test_short_row_names_line(self, tmp_path):
        ds = generate(SyntheticSpec(n=4), RandomStream(1))
        path = tmp_path / "bad.csv"
        write_csv(ds, path)
        lines = path.read_text().splitlines()
        fields = lines[2].split(",")
        lines[2] = ",".join(fields[1:])  # drop one attribute -> 199 attrs
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvFormatError, match="line 3"):
            read_csv(path)

    def test_non_bit_value_rejected(self, tmp_path):
        ds = generate(SyntheticSpec(n=2), RandomStream(1))
        path = tmp_path / "bad.csv"
        write_csv(ds, path)
        lines = path.read_text().splitlines()
        fields = lines[1].split(",")
        fields[0] = "2"
        lines[1] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvFormatError, match="line 2"):
            read_csv(path)

    def test_bad_label_rejected(self, tmp_path):
        ds = generate(SyntheticSpec(n=2), RandomStream(1))
        path = tmp_path / "bad.csv"
        write_csv(ds, path)
        lines = path.read_text().splitlines()
        fields = lines[1].split(",")
        fields[-1] = "0"
        lines[1] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvFormatError, match="label"):
            read_csv(path)


@settings(max_examples=20, deadline=None)
@given(
    n=st.integers(min_value=0, max_value=200).map(lambda k: 2 * k),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_label_balance_property(n, seed):
    ds = generate(SyntheticSpec(n=n, attr_count=8, noise_attr_count=4), RandomStream(seed))
    assert (ds.labels == 1).sum() == n // 2
    assert (ds.labels == -1).sum() == n // 2
