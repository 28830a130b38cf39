import json

import numpy as np
import pytest

from ltvstream.data_io import StreamConfig, read_stream
from ltvstream.synth import (
    CategorySpec,
    SynthSpec,
    SynthSpecError,
    demo_spec,
    generate,
    pareto_spec,
)


def single_gaussian(n_rows, seed=0, location=1500.0, scale=300.0, drift=()):
    return SynthSpec(
        categories=(CategorySpec("only", 1.0, "gaussian", location, scale),),
        n_rows=n_rows,
        seed=seed,
        drift_events=drift,
    )


class TestGenerate:
    def test_gaussian_mean_tracks_location(self):
        # clipping mass at location/scale = 5 sigma is ~3e-7: negligible
        _, targets = generate(single_gaussian(100_000, seed=1))
        assert abs(targets.mean() - 1500.0) / 1500.0 < 0.01

    def test_cauchy_tail_events(self):
        hits = 0
        for seed in range(20):
            spec = SynthSpec(
                categories=(CategorySpec("fat", 1.0, "cauchy", 100.0, 100.0),),
                n_rows=10_000,
                seed=seed,
            )
            _, targets = generate(spec)
            if targets.max() > 100.0 * 100.0:
                hits += 1
        assert hits >= 19

    def test_gaussian_never_has_extreme_tail_events(self):
        for seed in range(20):
            _, targets = generate(single_gaussian(10_000, seed=seed, location=100.0, scale=100.0))
            assert targets.max() < 100.0 * 100.0

    def test_drift_multiplies_segment_means(self):
        spec = single_gaussian(10_000, seed=3, location=100.0, scale=5.0, drift=((5000, 20.0),))
        _, targets = generate(spec)
        before = targets[:5000].mean()
        after = targets[5000:].mean()
        assert abs(after / before - 20.0) < 1.0  # within 5% of x20

    def test_seed_determinism_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        generate(demo_spec(n_rows=2000, seed=9), a)
        generate(demo_spec(n_rows=2000, seed=9), b)
        assert a.read_bytes() == b.read_bytes()

    def test_weights_realized(self):
        names, _ = generate(demo_spec(n_rows=100_000, seed=4))
        spec = demo_spec()
        counts = {c.name: 0 for c in spec.categories}
        for n in names:
            counts[n] += 1
        for cat in spec.categories:
            assert abs(counts[cat.name] / 100_000 - cat.weight) < 0.02

    def test_targets_clipped_at_zero(self):
        spec = SynthSpec(
            categories=(CategorySpec("fat", 1.0, "cauchy", 10.0, 100.0),),
            n_rows=5000,
            seed=5,
        )
        _, targets = generate(spec)
        assert targets.min() >= 0.0

    def test_output_readable_by_data_io(self, tmp_path):
        path = tmp_path / "d.csv"
        generate(demo_spec(n_rows=100, seed=0), path)
        batches = list(read_stream(StreamConfig(path, batch_size=64)))
        assert sum(len(b.categories) for b in batches) == 100


class TestParetoShape:
    def test_top_20_percent_carry_about_80_percent(self):
        shares = []
        for seed in range(5):
            _, targets = generate(pareto_spec(n_rows=10_000, seed=seed))
            order = np.sort(targets)[::-1]
            top = order[: len(order) // 5].sum()
            shares.append(top / order.sum())
        mean_share = float(np.mean(shares))
        assert 0.70 <= mean_share <= 0.90


class TestSpecValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(SynthSpecError, match="weight"):
            SynthSpec(
                categories=(
                    CategorySpec("a", 0.5, "gaussian", 1.0, 1.0),
                    CategorySpec("b", 0.6, "gaussian", 1.0, 1.0),
                ),
                n_rows=10,
            ).validate()

    def test_unknown_tail_named(self):
        with pytest.raises(SynthSpecError, match="tail"):
            CategorySpec("a", 1.0, "levy", 1.0, 1.0).validate()

    def test_student_t_needs_df(self):
        with pytest.raises(SynthSpecError, match="df"):
            CategorySpec("a", 1.0, "student_t", 1.0, 1.0).validate()

    def test_from_dict_missing_field_named(self):
        with pytest.raises(SynthSpecError, match="n_rows"):
            SynthSpec.from_dict({"categories": [
                {"name": "a", "weight": 1.0, "tail": "gaussian", "location": 1.0, "scale": 1.0}
            ]})

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "spec.json"
        spec = demo_spec(n_rows=500, seed=2)
        spec.to_json(path)
        loaded = SynthSpec.from_json(path)
        assert loaded == spec

    def test_demo_spec_shape(self):
        spec = demo_spec()
        assert spec.n_rows == 18000
        assert len(spec.categories) == 5
        tails = {c.tail for c in spec.categories}
        assert tails == {"gaussian", "student_t", "cauchy"}
        spec.validate()
