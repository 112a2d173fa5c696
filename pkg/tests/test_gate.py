import numpy as np
import pytest

from smoothfeed.features import (CHOPPY_ROW_DIM, DYNAMIC_ROW_DIM,
                                 FeatureSchema, GateFeatureVector)
from smoothfeed.gate import GateClassifier, GateConfig, pack_gate_batch
from smoothfeed.metrics import auc
from smoothfeed.nn import WeightedSigmoidBCE, constant
from smoothfeed.validation import NotFittedError

SCHEMA = FeatureSchema(dynamic_cap=6, choppy_cap=4)


def random_fv(rng, schema=SCHEMA, code_override=None):
    n_numeric = len(schema.numeric_fields)
    codes = np.array([rng.integers(0, f.n_bins) for f in schema.numeric_fields]
                     + [rng.integers(0, schema.size_tier_vocab)], dtype=np.int64)
    if code_override is not None:
        codes[0] = code_override
    n_dyn = int(rng.integers(0, schema.dynamic_cap + 1))
    dyn = np.zeros((schema.dynamic_cap, DYNAMIC_ROW_DIM), dtype=np.float32)
    dyn[:n_dyn] = rng.random((n_dyn, DYNAMIC_ROW_DIM))
    dyn_mask = np.zeros(schema.dynamic_cap, dtype=np.float32)
    dyn_mask[:n_dyn] = 1.0
    n_ch = int(rng.integers(0, schema.choppy_cap + 1))
    ch = np.zeros((schema.choppy_cap, CHOPPY_ROW_DIM), dtype=np.float32)
    ch[:n_ch] = rng.random((n_ch, CHOPPY_ROW_DIM))
    ch_mask = np.zeros(schema.choppy_cap, dtype=np.float32)
    ch_mask[:n_ch] = 1.0
    return GateFeatureVector(
        static_codes=codes,
        prior_codes=rng.integers(0, 3, size=3).astype(np.int64),
        dynamic_seq=dyn, dynamic_mask=dyn_mask,
        choppy_seq=ch, choppy_mask=ch_mask)


def toy_config(**overrides):
    base = dict(n_mask_blocks=2, mask_hidden=16, attn_dim=8,
                lr_initial=0.02, lr_hold_steps=10_000, batch_size=256, epochs=1)
    base.update(overrides)
    return GateConfig(**base)


class TestColdModel:
    def test_untrained_scores_exactly_half(self):
        clf = GateClassifier(toy_config(), SCHEMA, seed=3).build()
        rng = np.random.default_rng(0)
        probs = clf.predict_proba([random_fv(rng) for _ in range(8)])
        assert np.all(probs == 0.5)

    def test_predict_before_build_raises(self):
        clf = GateClassifier(toy_config(), SCHEMA)
        with pytest.raises(NotFittedError):
            clf.predict_proba([random_fv(np.random.default_rng(0))])

    def test_scores_strictly_inside_unit_interval(self):
        clf = GateClassifier(toy_config(epochs=2), SCHEMA, seed=1)
        rng = np.random.default_rng(1)
        X = [random_fv(rng, code_override=int(i % 2) * 30) for i in range(64)]
        y = np.array([i % 2 for i in range(64)])
        clf.fit(X, y)
        probs = clf.predict_proba(X)
        assert np.all(probs > 0.0)
        assert np.all(probs < 1.0)


class TestTraining:
    def test_separable_toy_reaches_high_auc(self):
        # Label determined by the first static code; 200 full-batch steps.
        rng = np.random.default_rng(5)
        X, y = [], []
        for _ in range(200):
            label = int(rng.random() < 0.5)
            X.append(random_fv(rng, code_override=5 if label else 27))
            y.append(label)
        clf = GateClassifier(toy_config(epochs=200), SCHEMA, seed=0)
        clf.fit(X, y)
        assert clf.score(X, np.array(y)) >= 0.99
        assert clf.global_step_ <= 200

    def test_weighted_loss_optimum_is_ten_elevenths(self):
        # One positive and one negative with identical features: the 10:1
        # weighted cross-entropy is minimized by the constant 10/11.
        rng = np.random.default_rng(2)
        fv = random_fv(rng)
        clf = GateClassifier(toy_config(lr_initial=0.05, epochs=1500), SCHEMA, seed=0)
        clf.fit([fv, fv], [1, 0])
        p = clf.predict_proba([fv])[0]
        assert p == pytest.approx(10.0 / 11.0, abs=0.02)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(9)
        X = [random_fv(rng, code_override=(i % 2) * 20) for i in range(64)]
        y = [i % 2 for i in range(64)]

        def run():
            clf = GateClassifier(toy_config(epochs=3), SCHEMA, seed=11)
            clf.fit(X, y)
            return b"".join(p.value.tobytes() for p in clf.params_)

        assert run() == run()

    def test_single_class_rejected(self):
        rng = np.random.default_rng(0)
        X = [random_fv(rng) for _ in range(4)]
        clf = GateClassifier(toy_config(), SCHEMA)
        with pytest.raises(ValueError, match="both classes"):
            clf.fit(X, [1, 1, 1, 1])

    def test_training_log_has_losses_and_val_auc(self):
        rng = np.random.default_rng(4)
        X = [random_fv(rng, code_override=(i % 2) * 20) for i in range(32)]
        y = [i % 2 for i in range(32)]
        clf = GateClassifier(toy_config(epochs=2, batch_size=16), SCHEMA, seed=0)
        clf.fit(X, y, validation=(X, np.array(y)))
        steps = [e for e in clf.training_log_ if "loss" in e]
        evals = [e for e in clf.training_log_ if "val_auc" in e]
        assert len(steps) == 4
        assert len(evals) == 2

    def test_batch_loss_is_permutation_invariant(self):
        rng = np.random.default_rng(6)
        X = [random_fv(rng) for _ in range(16)]
        y = np.array([i % 2 for i in range(16)], dtype=np.float32)
        clf = GateClassifier(toy_config(), SCHEMA, seed=2).build()
        loss_op = WeightedSigmoidBCE(10.0, 1.0)

        def batch_loss(order):
            batch = pack_gate_batch([X[i] for i in order])
            return float(loss_op(clf.net_.logits(batch), y[order]).value)

        base = batch_loss(np.arange(16))
        for seed in range(3):
            perm = np.random.default_rng(seed).permutation(16)
            assert batch_loss(perm) == pytest.approx(base, abs=1e-6)


class TestEstimatorSurface:
    def test_get_params_exposes_nested_config(self):
        clf = GateClassifier(toy_config(), SCHEMA, seed=5)
        params = clf.get_params()
        assert params["seed"] == 5
        assert params["config__threshold"] == 0.75
        assert params["config__class_weight_pos"] == 10.0

    def test_set_params_roundtrip(self):
        clf = GateClassifier(toy_config(), SCHEMA)
        clf.set_params(config__threshold=0.6, seed=9)
        assert clf.config.threshold == 0.6
        assert clf.seed == 9
        with pytest.raises(ValueError):
            clf.set_params(config__not_a_field=1)

    def test_predict_applies_threshold(self):
        clf = GateClassifier(toy_config(), SCHEMA, seed=0).build()
        rng = np.random.default_rng(0)
        X = [random_fv(rng)]
        # Cold model scores exactly 0.5 < 0.75 threshold.
        assert clf.predict(X).tolist() == [False]

    def test_param_count_reported(self):
        clf = GateClassifier(GateConfig(), FeatureSchema(), seed=0).build()
        assert 0 < clf.param_count < 1_000_000

    def test_state_tensor_roundtrip(self):
        clf = GateClassifier(toy_config(), SCHEMA, seed=1).build()
        rng = np.random.default_rng(7)
        X = [random_fv(rng, code_override=(i % 2) * 20) for i in range(32)]
        clf.fit(X, [i % 2 for i in range(32)])
        probs = clf.predict_proba(X)

        other = GateClassifier(toy_config(), SCHEMA, seed=999)
        other.load_state_tensors(clf.state_tensors(), step=clf.global_step_)
        assert np.array_equal(other.predict_proba(X), probs)
