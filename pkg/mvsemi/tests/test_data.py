from __future__ import absolute_import, division
from collections import Counter
from pathlib import Path
import tempfile
import unittest

import numpy as np

from mvsemi.data_helpers import (
    inject_missingness,
    mean_impute,
    reduce_labels,
    split_dataset,
    train_view_means,
    zscore_standardize,
)
from mvsemi.dataset import Dataset, DatasetSchema, MultiViewSample
from mvsemi.generators import (
    GeneratorConfig,
    calibrate_class_separation,
    gen_glyph_images,
    gen_tabular,
    generate,
    load_glyphs,
    make_glyphs,
    linear_accuracy,
)
from mvsemi.tests.oracles import oracle_glyph_classifier
from mvsemi.tests.toys import glyph_config, random_samples, tabular_config

SCHEMA = DatasetSchema(view_shapes=((3,), (2,)), num_classes=2)


def assert_same_samples(test, a, b):
    test.assertEqual(len(a), len(b))
    for x, y in zip(a, b):
        test.assertEqual(x, y)


class TestSchema(unittest.TestCase):

    def test_defaults(self):
        self.assertEqual(SCHEMA.view_likelihood, ("gaussian", "gaussian"))
        self.assertTrue(SCHEMA.is_tabular)
        self.assertEqual(SCHEMA.view_size(0), 3)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            DatasetSchema(view_shapes=((3,),), num_classes=2)
        with self.assertRaises(ValueError):
            DatasetSchema(view_shapes=((3,), (2, 2)), num_classes=2)
        with self.assertRaises(ValueError):
            DatasetSchema(view_shapes=((3,), (2,)), num_classes=1)
        with self.assertRaises(ValueError):
            DatasetSchema(view_shapes=((3,), (2,)), num_classes=2, view_likelihood=("poisson", "gaussian"))

    def test_dict(self):
        schema = DatasetSchema(view_shapes=((4, 4, 1), (3,)), num_classes=5,
                               view_likelihood=("bernoulli", "gaussian"))
        self.assertEqual(DatasetSchema.from_dict(schema.to_dict()), schema)
        payload = schema.to_dict()
        payload["num_views"] = 3
        with self.assertRaises(ValueError):
            DatasetSchema.from_dict(payload)


class TestDataset(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(ValueError):
            Dataset(SCHEMA, [MultiViewSample([None, None], sample_id=0)])
        with self.assertRaises(ValueError):
            Dataset(SCHEMA, [MultiViewSample([np.zeros(3), None], sample_id=0)] * 2)
        with self.assertRaises(ValueError):
            Dataset(SCHEMA, [MultiViewSample([np.zeros(2), None], sample_id=0)])
        with self.assertRaises(ValueError):
            Dataset(SCHEMA, [MultiViewSample([np.zeros(3), None], label=2, sample_id=0)])
        with self.assertRaises(ValueError):
            Dataset(SCHEMA, [], split_tag="holdout")

    def test_accessors(self):
        samples = [MultiViewSample([np.ones(3), None], label=1, sample_id=4),
                   MultiViewSample([None, np.ones(2)], sample_id=7)]
        dataset = Dataset(SCHEMA, samples)
        self.assertEqual(dataset.labels.tolist(), [1, -1])
        self.assertEqual(dataset.num_labeled, 1)
        self.assertEqual(dataset.present_mask.tolist(), [[True, False], [False, True]])
        self.assertTrue(np.array_equal(dataset.view_matrix(1), [[0, 0], [1, 1]]))
        self.assertEqual(len(dataset.labeled_subset()), 1)
        batch = dataset.to_batch()
        self.assertEqual(batch.labeled.tolist(), [True, False])
        self.assertEqual(batch.sample_ids.tolist(), [4, 7])

    def test_sample_copy(self):
        sample = MultiViewSample([np.ones(3), np.zeros(2)], label=1, sample_id=3)
        self.assertIsNone(sample.copy(label=None).label)
        self.assertEqual(sample.copy().label, 1)
        self.assertEqual(sample.copy(views=[None, np.zeros(2)]).num_present, 1)


class TestTabularGenerator(unittest.TestCase):

    def test_defaults(self):
        config = GeneratorConfig(kind="tabular").resolved()
        self.assertEqual((config.n_train, config.n_val, config.n_test), (10000, 2500, 3000))
        self.assertEqual(config.num_views, 4)
        self.assertEqual(config.num_classes, 2)
        self.assertEqual(config.view_dims, [100] * 4)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            GeneratorConfig(kind="audio").resolved()
        with self.assertRaises(ValueError):
            tabular_config(view_dims=[5, 4]).resolved()
        with self.assertRaises(ValueError):
            tabular_config(num_views=1, view_dims=[5]).resolved()

    def test_shapes(self):
        train, val, test = gen_tabular(tabular_config())
        self.assertEqual((len(train), len(val), len(test)), (64, 32, 32))
        self.assertEqual(train.schema.view_shapes, ((5,), (4,), (3,)))
        self.assertTrue(train.present_mask.all())
        self.assertEqual(train.num_labeled, 64)
        ids = np.concatenate([d.sample_ids for d in (train, val, test)])
        self.assertEqual(len(set(ids.tolist())), 128)

    def test_deterministic(self):
        for a, b in zip(gen_tabular(tabular_config()), gen_tabular(tabular_config())):
            assert_same_samples(self, a, b)
        other = gen_tabular(tabular_config(seed=1))[0]
        self.assertFalse(np.array_equal(other.view_matrix(0), gen_tabular(tabular_config())[0].view_matrix(0)))

    def test_sample_stream_independent_of_size(self):
        small = gen_tabular(tabular_config(n_train=10))[0]
        large = gen_tabular(tabular_config(n_train=40))[0]
        assert_same_samples(self, small.samples, large.samples[:10])

    def test_calibration(self):
        config, accuracy = calibrate_class_separation(tabular_config(class_separation=1.0),
                                                      target=0.8, n_fit=300, growth=1.5)
        self.assertGreater(accuracy, 0.8)
        self.assertGreaterEqual(config.class_separation, 1.0)

    def test_default_calibration(self):
        defaults = GeneratorConfig(kind="tabular")
        config, accuracy = calibrate_class_separation(defaults)
        self.assertGreater(accuracy, 0.9)
        self.assertGreaterEqual(config.class_separation, defaults.class_separation)
        self.assertEqual(config.view_dims, [100] * 4)
        self.assertEqual(config.n_train, 10000)

    def test_no_signal(self):
        train, _, test = gen_tabular(tabular_config(class_separation=0.0, n_train=1000, n_test=1000))
        self.assertAlmostEqual(linear_accuracy(train, test), 0.5, delta=0.06)


class TestGlyphGenerator(unittest.TestCase):

    def test_defaults(self):
        config = GeneratorConfig(kind="glyph").resolved()
        self.assertEqual((config.n_train, config.n_val, config.n_test), (20000, 2500, 5000))
        self.assertEqual((config.num_views, config.num_classes), (5, 10))

    def test_glyphs(self):
        glyphs = make_glyphs(10, 7, seed=0, min_distance=10)
        self.assertEqual(glyphs.shape, (10, 7, 7))
        flat = glyphs.reshape(10, -1)
        for a in range(10):
            self.assertGreater(flat[a].sum(), 0)
            for b in range(a + 1, 10):
                self.assertGreaterEqual(int((flat[a] != flat[b]).sum()), 10)
        self.assertTrue(np.array_equal(glyphs, make_glyphs(10, 7, seed=0, min_distance=10)))

    def test_impossible_glyphs(self):
        with self.assertRaises(ValueError):
            make_glyphs(10, 2, seed=0, min_distance=4, max_attempts=5)

    def test_images(self):
        train, val, test = gen_glyph_images(glyph_config())
        self.assertEqual(train.schema.view_shapes, ((14, 14, 1),) * 2)
        self.assertEqual(train.schema.view_likelihood, ("bernoulli", "bernoulli"))
        x = train[0].views[0]
        self.assertEqual(x.dtype, np.float32)
        self.assertTrue(((x >= 0) & (x <= 1)).all())
        self.assertEqual(len(test), 20)

    def test_deterministic(self):
        for a, b in zip(generate(glyph_config()), generate(glyph_config())):
            assert_same_samples(self, a, b)

    def test_background_only(self):
        train = gen_glyph_images(glyph_config(overlay=False))[0]
        self.assertLessEqual(max(float(x.max()) for s in train for x in s.views), 0.5)

    def test_template_oracle(self):
        config = GeneratorConfig(kind="glyph", n_train=100, n_val=1, n_test=1, seed=3).resolved()
        glyphs = make_glyphs(config.num_classes, config.glyph_side, config.seed, config.glyph_min_distance)
        train = gen_glyph_images(config)[0]
        correct = [oracle_glyph_classifier(x, glyphs) == s.label for s in train for x in s.views]
        self.assertGreater(np.mean(correct), 0.95)

    def test_load_glyphs(self):
        glyphs = make_glyphs(4, 5, seed=1, min_distance=6)
        with tempfile.TemporaryDirectory() as tmp:
            for c, glyph in enumerate(glyphs):
                np.save(Path(tmp).joinpath("glyph_{:d}.npy".format(c)), glyph.astype(np.uint8))
            loaded = load_glyphs(tmp, 4, max_side=14)
            self.assertTrue(all(np.array_equal(a, b) for a, b in zip(loaded, glyphs)))
            with self.assertRaises(ValueError):
                load_glyphs(tmp, 4, max_side=4)
            train = gen_glyph_images(glyph_config(glyph_dir=tmp))[0]
            self.assertEqual(len(train), 40)


class TestMissingness(unittest.TestCase):

    def setUp(self):
        self.train = gen_tabular(tabular_config())[0]

    def test_zero_rate(self):
        assert_same_samples(self, inject_missingness(self.train, 0.0, seed=0), self.train)

    def test_invalid_rate(self):
        for rate in (-0.1, 1.0):
            with self.assertRaises(ValueError):
                inject_missingness(self.train, rate, seed=0)

    def test_deterministic_and_monotone(self):
        a = inject_missingness(self.train, 0.4, seed=2)
        b = inject_missingness(self.train, 0.4, seed=2)
        self.assertTrue(np.array_equal(a.present_mask, b.present_mask))
        twice = inject_missingness(a, 0.4, seed=5)
        self.assertFalse((twice.present_mask & ~a.present_mask).any())
        for before, after in zip(self.train, a):
            for x, y in zip(before.views, after.views):
                if y is not None:
                    self.assertTrue(np.array_equal(x, y))
        self.assertEqual(a.metadata["drop_rate"], 0.4)

    def test_empirical_rate(self):
        config = tabular_config(n_train=20000, n_val=1, n_test=1, num_views=5, view_dims=[2] * 5)
        dropped = inject_missingness(gen_tabular(config)[0], 0.5, seed=0)
        mask = dropped.present_mask
        self.assertTrue(mask.any(axis=1).all())
        self.assertAlmostEqual(mask.all(axis=1).mean(), 0.5 ** 5, delta=0.01)
        # restoration adds back one view for the P(all dropped) = 0.5^5 samples
        expected = 0.5 - 0.5 ** 5 / 5
        for v in range(5):
            self.assertAlmostEqual(1 - mask[:, v].mean(), expected, delta=0.02)


class TestLabelReduction(unittest.TestCase):

    def setUp(self):
        self.train = gen_tabular(tabular_config(n_train=203))[0]

    def test_counts(self):
        reduced = reduce_labels(self.train, 0.3, seed=0)
        before = Counter(self.train.labels.tolist())
        after = Counter(l for l in reduced.labels.tolist() if l >= 0)
        for label, count in before.items():
            self.assertEqual(after[label], int(np.floor(0.3 * count + 0.5)))
            self.assertEqual(reduced.metadata["kept_label_counts"][label], after[label])
        self.assertEqual(len(reduced), len(self.train))
        kept = reduced.labels >= 0
        self.assertTrue(np.array_equal(reduced.labels[kept], self.train.labels[kept]))

    def test_deterministic(self):
        a = reduce_labels(self.train, 0.1, seed=4)
        b = reduce_labels(self.train, 0.1, seed=4)
        self.assertTrue(np.array_equal(a.labels, b.labels))

    def test_keep_all(self):
        reduced = reduce_labels(self.train, 1.0, seed=0)
        self.assertTrue(np.array_equal(reduced.labels, self.train.labels))

    def test_empty_class_warning(self):
        reduced = reduce_labels(self.train, 0.001, seed=0)
        self.assertEqual(reduced.num_labeled, 0)
        self.assertEqual(len(reduced.metadata["label_warnings"]), 2)

    def test_errors(self):
        with self.assertRaises(ValueError):
            reduce_labels(self.train, 0.0, seed=0)
        with self.assertRaises(ValueError):
            reduce_labels(self.train.replace(split_tag="val"), 0.5, seed=0)


class TestStandardization(unittest.TestCase):

    def test_train_moments(self):
        train, val, test = [inject_missingness(d, 0.3, 0) for d in gen_tabular(tabular_config())]
        (train_z, val_z, _), stats = zscore_standardize(train, val, test)
        for v in range(3):
            rows = np.stack([s.views[v] for s in train_z if s.views[v] is not None])
            self.assertTrue((np.abs(rows.mean(axis=0)) < 1e-6).all())
            self.assertTrue((np.abs(rows.std(axis=0) - 1) < 1e-6).all())
        self.assertTrue(np.array_equal(val_z.present_mask, val.present_mask))
        sample, original = val_z[0], val[0]
        for v, x in enumerate(sample.views):
            if x is not None:
                self.assertTrue(np.allclose(x, (original.views[v] - stats[v][0]) / stats[v][1]))

    def test_fixed_stats(self):
        train, val, _ = gen_tabular(tabular_config())
        (train_z, val_z), stats = zscore_standardize(train, val)
        (again, val_again), _ = zscore_standardize(train, val, stats=stats, refit=False)
        assert_same_samples(self, again, train_z)
        assert_same_samples(self, val_again, val_z)
        with self.assertRaises(ValueError):
            zscore_standardize(train, refit=False)

    def test_constant_feature(self):
        samples = [MultiViewSample([np.array([1.0, 2.0, float(i)]), np.ones(2)], sample_id=i) for i in range(5)]
        (out,), stats = zscore_standardize(Dataset(SCHEMA, samples))
        self.assertTrue(all(np.isfinite(s.views[1]).all() for s in out))
        self.assertEqual(stats[1][1].min(), 1e-8)

    def test_images_rejected(self):
        with self.assertRaises(ValueError):
            zscore_standardize(gen_glyph_images(glyph_config())[0])


class TestSplit(unittest.TestCase):

    def setUp(self):
        samples = random_samples(101, SCHEMA, seed=0, labeled=0.9)
        self.dataset = Dataset(SCHEMA, samples)

    def test_partition(self):
        splits = split_dataset(self.dataset, seed=1)
        ids = [set(d.sample_ids.tolist()) for d in splits]
        self.assertEqual(set.union(*ids), set(self.dataset.sample_ids.tolist()))
        self.assertEqual(sum(len(i) for i in ids), 101)
        self.assertEqual([d.split_tag for d in splits], ["train", "val", "test"])
        unlabeled = {s.sample_id for s in self.dataset if s.label is None}
        self.assertTrue(unlabeled <= ids[0])

    def test_stratified(self):
        splits = split_dataset(self.dataset, fractions=(0.6, 0.2, 0.2), seed=1)
        totals = Counter(l for l in self.dataset.labels.tolist() if l >= 0)
        for d, fraction in zip(splits, (0.6, 0.2, 0.2)):
            counts = Counter(l for l in d.labels.tolist() if l >= 0)
            for label, total in totals.items():
                self.assertLessEqual(abs(counts[label] - fraction * total), 1)

    def test_deterministic(self):
        a = split_dataset(self.dataset, seed=3)
        b = split_dataset(self.dataset, seed=3)
        for x, y in zip(a, b):
            self.assertTrue(np.array_equal(x.sample_ids, y.sample_ids))

    def test_bad_fractions(self):
        with self.assertRaises(ValueError):
            split_dataset(self.dataset, fractions=(0.5, 0.2, 0.2))
        with self.assertRaises(ValueError):
            split_dataset(self.dataset, fractions=(0.5, 0.5))


class TestMeanImpute(unittest.TestCase):

    def test_fill(self):
        samples = [MultiViewSample([np.array([1.0, 2.0, 3.0]), None], sample_id=0),
                   MultiViewSample([np.array([3.0, 2.0, 1.0]), np.array([4.0, 6.0])], sample_id=1)]
        dataset = Dataset(SCHEMA, samples)
        means = train_view_means(dataset)
        self.assertTrue(np.allclose(means[0], 2.0))
        self.assertTrue(np.allclose(means[1], [4.0, 6.0]))
        filled = mean_impute(dataset, means)
        self.assertTrue(filled.present_mask.all())
        self.assertTrue(np.allclose(filled[0].views[1], [4.0, 6.0]))
        self.assertIsNone(dataset[0].views[1])


if __name__ == '__main__':
    unittest.main()
