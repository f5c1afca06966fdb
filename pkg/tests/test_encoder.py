"""Tokenizer, feature hashing, forward pass, optimizer, and checkpoints."""
from __future__ import annotations

import copy

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import N_CASES, random_features, small_params
from selfmix.common import NumericError
from selfmix.encoder import (
    FNV_OFFSET,
    BatchItem,
    FeatureVector,
    ModelParams,
    adam_step,
    backward,
    batch_loss,
    encode,
    evaluate_batch,
    featurize,
    featurize_text,
    fnv1a64,
    head_forward,
    init_optimizer,
    init_params,
    load_checkpoint,
    log_softmax,
    predict_proba,
    rdrop_from_probs,
    save_checkpoint,
    softmax,
    tokenize,
)

# ---------------------------------------------------------------------------
# Tokenizer and feature hashing
# ---------------------------------------------------------------------------


def test_tokenize_examples():
    assert tokenize("The movie was great!") == ["the", "movie", "was", "great"]
    assert tokenize("") == []
    assert tokenize("A-B a b") == ["a", "b", "a", "b"]


def test_tokenize_splits_on_any_non_alphanumeric():
    assert tokenize("a\tb\nc--d..e") == ["a", "b", "c", "d", "e"]
    assert tokenize("¡hola! café 123x") == ["hola", "café", "123x"]


@given(st.text(max_size=60))
def test_tokenize_pure_and_lossless_under_rejoin(text):
    tokens = tokenize(text)
    assert tokens == tokenize(text)
    assert all(tok and tok == tok.lower() for tok in tokens)
    assert all(ch.isalnum() for tok in tokens for ch in tok)
    # splitting is stable: re-tokenizing the joined tokens is the identity
    assert tokenize(" ".join(tokens)) == tokens


def test_fnv1a64_known_vectors():
    # Published FNV-1a 64-bit reference values.
    assert fnv1a64(b"") == FNV_OFFSET == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_featurize_empty():
    fv = featurize([], 16)
    assert fv.indices.size == 0 and fv.weights.size == 0
    assert featurize_text("", 16).indices.size == 0


def test_featurize_single_token():
    fv = featurize(["a"], 2)
    assert fv.indices.tolist() == [fnv1a64(b"a") % 2]
    assert fv.weights.tolist() == [1.0]


def test_featurize_unigrams_plus_adjacent_bigram():
    big = 2**62  # collision-free at this size for three features
    fv = featurize(["a", "b"], big)
    expected = sorted(
        {fnv1a64(b"a") % big, fnv1a64(b"b") % big, fnv1a64(b"a\x1fb") % big}
    )
    assert fv.indices.tolist() == expected
    assert np.allclose(fv.weights, 1.0 / 3.0)


def test_featurize_counts_repeats():
    fv = featurize(["a", "a"], 2**62)
    # features: a (twice), a\x1fa (once) -> weights 2/3 and 1/3
    assert sorted(fv.weights.tolist()) == pytest.approx([1.0 / 3.0, 2.0 / 3.0])


def test_featurize_rejects_zero_buckets():
    with pytest.raises(ValueError):
        featurize(["a"], 0)


def test_featurize_purity_property():
    """Indices strictly increase, weights are positive and sum to 1, and
    identical token lists produce bit-identical vectors."""
    rng = np.random.default_rng(21)
    for _ in range(N_CASES):
        num_tokens = int(rng.integers(0, 12))
        tokens = [f"w{int(rng.integers(0, 9))}" for _ in range(num_tokens)]
        num_buckets = int(rng.integers(1, 64))
        fv = featurize(tokens, num_buckets)
        again = featurize(list(tokens), num_buckets)
        assert np.array_equal(fv.indices, again.indices)
        assert np.array_equal(fv.weights, again.weights)
        assert np.all(np.diff(fv.indices) > 0)
        if tokens:
            assert np.all(fv.weights > 0)
            assert abs(fv.weights.sum() - 1.0) <= 1e-12
            assert np.all(fv.indices >= 0) and np.all(fv.indices < num_buckets)


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def test_encode_empty_is_zero_vector():
    params = init_params(8, 4, 2, 0.0, seed=0)
    fv = FeatureVector(np.empty(0, dtype=np.int64), np.empty(0))
    assert np.array_equal(encode(params, fv), np.zeros(4))


def test_encode_single_feature_is_that_row():
    params = init_params(8, 4, 2, 0.0, seed=0)
    fv = FeatureVector(np.array([3], dtype=np.int64), np.array([1.0]))
    assert np.allclose(encode(params, fv), params.embedding[3])


def test_encode_two_features_mean():
    params = init_params(8, 4, 2, 0.0, seed=0)
    fv = FeatureVector(np.array([1, 5], dtype=np.int64), np.array([0.5, 0.5]))
    expected = (params.embedding[1] + params.embedding[5]) / 2.0
    assert np.allclose(encode(params, fv), expected)


def test_encode_index_out_of_range():
    params = init_params(8, 4, 2, 0.0, seed=0)
    fv = FeatureVector(np.array([8], dtype=np.int64), np.array([1.0]))
    with pytest.raises(ValueError):
        encode(params, fv)


# ---------------------------------------------------------------------------
# head_forward and softmax
# ---------------------------------------------------------------------------


def test_head_forward_dropout_off_deterministic():
    params = init_params(8, 4, 3, 0.5, seed=1)
    e = np.array([0.1, -0.2, 0.3, 0.4])
    assert np.array_equal(head_forward(params, e), head_forward(params, e))


def test_head_forward_same_mask_seed_same_logits():
    params = init_params(8, 4, 3, 0.5, seed=1)
    e = np.array([0.1, -0.2, 0.3, 0.4])
    a = head_forward(params, e, dropout_on=True, mask_seed=7, key=2, pass_index=1)
    b = head_forward(params, e, dropout_on=True, mask_seed=7, key=2, pass_index=1)
    assert np.array_equal(a, b)
    different = head_forward(params, e, dropout_on=True, mask_seed=8, key=2, pass_index=1)
    assert not np.array_equal(a, different)


def test_head_forward_zero_rate_matches_dropout_off():
    params = init_params(8, 4, 3, 0.0, seed=1)
    e = np.array([0.1, -0.2, 0.3, 0.4])
    on = head_forward(params, e, dropout_on=True, mask_seed=7)
    assert np.array_equal(on, head_forward(params, e))


def test_dropout_off_forward_is_pure():
    """Dropout-off logits depend only on (input, params)."""
    rng = np.random.default_rng(33)
    for _ in range(N_CASES):
        params = small_params(rng, dropout_rate=float(rng.random() * 0.9))
        e = rng.normal(size=params.hidden)
        first = head_forward(params, e)
        second = head_forward(params, e.copy())
        assert np.array_equal(first, second)
        fv = random_features(rng, params.num_buckets)
        assert np.array_equal(predict_proba(params, fv), predict_proba(params, fv))


def test_softmax_examples():
    assert np.allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    assert np.allclose(softmax(np.full(4, 3.7)), [0.25, 0.25, 0.25, 0.25])
    huge = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(huge))
    assert huge[0] == pytest.approx(1.0)
    assert huge[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_rejects_non_finite():
    for bad in ([np.nan, 0.0], [np.inf, 0.0], [-np.inf, 0.0]):
        with pytest.raises(NumericError):
            softmax(np.array(bad))


def test_softmax_shift_invariance_property():
    rng = np.random.default_rng(5)
    for _ in range(N_CASES):
        z = rng.normal(scale=rng.uniform(0.1, 50.0), size=int(rng.integers(2, 8)))
        shift = rng.uniform(-1e3, 1e3)
        assert np.all(np.abs(softmax(z + shift) - softmax(z)) <= 1e-12)
        p = softmax(z)
        assert np.all(p >= 0.0) and abs(p.sum() - 1.0) <= 1e-12
        assert np.allclose(np.exp(log_softmax(z)), p)


# ---------------------------------------------------------------------------
# Batch evaluation
# ---------------------------------------------------------------------------


def test_backward_stationary_when_target_equals_prediction():
    params = init_params(8, 4, 3, 0.0, seed=3)
    e = np.array([0.5, -0.1, 0.2, 0.9])
    target = softmax(head_forward(params, e))
    _, grads, _ = backward(params, [BatchItem(e, "ce", target)])
    for arr in (grads.w1, grads.b1, grads.w2, grads.b2):
        assert np.all(np.abs(arr) <= 1e-12)
    assert grads.emb_rows.size == 0  # embedding input bypasses the table


def test_backward_mean_invariance_under_duplication():
    rng = np.random.default_rng(17)
    params = small_params(rng, dropout_rate=0.0)
    items = []
    for _ in range(3):
        fv = random_features(rng, params.num_buckets)
        target = np.zeros(params.num_classes)
        target[int(rng.integers(params.num_classes))] = 1.0
        items.append(BatchItem(fv, "ce", target, weight=1.0 / 3.0))
    doubled = [
        BatchItem(it.input, it.kind, it.target, weight=it.weight / 2.0)
        for it in items
        for _ in range(2)
    ]
    loss_a, grads_a, _ = backward(params, items)
    loss_b, grads_b, _ = backward(params, doubled)
    assert loss_a == pytest.approx(loss_b, abs=1e-12)
    assert np.allclose(grads_a.w2, grads_b.w2, atol=1e-12)
    assert np.allclose(
        grads_a.dense_embedding(params.num_buckets),
        grads_b.dense_embedding(params.num_buckets),
        atol=1e-12,
    )


def test_evaluate_batch_breakdown_counts_kinds():
    rng = np.random.default_rng(2)
    params = small_params(rng, dropout_rate=0.3)
    fv = random_features(rng, params.num_buckets)
    target = np.zeros(params.num_classes)
    target[0] = 1.0
    items = [
        BatchItem(fv, "ce", target),
        BatchItem(fv, "pseudo"),
        BatchItem(fv, "pseudo"),
        BatchItem(fv, "rdrop"),
    ]
    total, grads, breakdown = evaluate_batch(params, items, mask_seed=4)
    assert breakdown["ce"][1] == 1
    assert breakdown["pseudo"][1] == 2
    assert breakdown["rdrop"][1] == 1
    assert total == pytest.approx(
        breakdown["ce"][0] + breakdown["pseudo"][0] + breakdown["rdrop"][0]
    )
    assert grads is not None


def test_evaluate_batch_weights_scale_total_not_breakdown():
    rng = np.random.default_rng(8)
    params = small_params(rng, dropout_rate=0.0)
    fv = random_features(rng, params.num_buckets)
    item = BatchItem(fv, "pseudo", weight=0.25)
    total, _, breakdown = evaluate_batch(params, [item])
    raw, count = breakdown["pseudo"]
    assert count == 1
    assert total == pytest.approx(0.25 * raw)


def test_evaluate_batch_rejects_unknown_kind():
    params = init_params(8, 4, 2, 0.0, seed=0)
    with pytest.raises(ValueError, match="unknown batch item kind"):
        evaluate_batch(params, [BatchItem(np.zeros(4), "nope")])


def test_evaluate_batch_requires_ce_target():
    params = init_params(8, 4, 2, 0.0, seed=0)
    with pytest.raises(ValueError, match="target"):
        evaluate_batch(params, [BatchItem(np.zeros(4), "ce")])


def test_evaluate_batch_names_non_finite_term_and_position():
    params = init_params(8, 4, 2, 0.0, seed=0)
    good = BatchItem(np.zeros(4), "ce", np.array([1.0, 0.0]))
    poisoned = BatchItem(np.zeros(4), "ce", np.array([np.nan, 0.0]))
    with pytest.raises(NumericError, match="non-finite ce loss at batch position 1"):
        evaluate_batch(params, [good, poisoned])


def test_rdrop_from_probs_basics():
    p = np.array([0.3, 0.7])
    assert rdrop_from_probs(p, p) == 0.0
    q = np.array([0.6, 0.4])
    assert rdrop_from_probs(p, q) == pytest.approx(rdrop_from_probs(q, p))
    assert rdrop_from_probs(p, q) > 0.0


def test_shared_key_shares_dropout_masks_across_kinds():
    """A confidence term with the same key as a consistency term is evaluated
    on that item's first perturbed pass: drop(pass0) + drop(pass1) losses
    decompose the rdrop term's two passes."""
    rng = np.random.default_rng(12)
    params = small_params(rng, dropout_rate=0.5)
    fv = random_features(rng, params.num_buckets)
    mask_seed = 99
    e = encode(params, fv)
    z0 = head_forward(params, e, dropout_on=True, mask_seed=mask_seed, key=5, pass_index=0)
    z1 = head_forward(params, e, dropout_on=True, mask_seed=mask_seed, key=5, pass_index=1)
    expected = rdrop_from_probs(softmax(z0), softmax(z1))
    total, _ = batch_loss(params, [BatchItem(fv, "rdrop", key=5)], mask_seed=mask_seed)
    assert total == pytest.approx(expected, abs=1e-12)
    # pseudo with the same key sees exactly the pass-0 mask
    p0 = softmax(z0)
    expected_pseudo = -np.log(p0[int(np.argmax(p0))])
    got, _ = batch_loss(params, [BatchItem(fv, "pseudo", key=5)], mask_seed=mask_seed)
    assert got == pytest.approx(expected_pseudo, abs=1e-12)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_zero_gradient_is_identity():
    params = init_params(8, 4, 2, 0.0, seed=0)
    before = copy.deepcopy(params)
    opt = init_optimizer(params, learning_rate=0.1)
    zero = backward(params, [BatchItem(np.zeros(4), "ce", softmax(np.zeros(2)))])[1]
    # force exact zeros regardless of float dust
    for arr in (zero.w1, zero.b1, zero.w2, zero.b2):
        arr[:] = 0.0
    adam_step(params, zero, opt)
    assert opt.step == 1
    for name in ("embedding", "w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(params, name), getattr(before, name))


def test_adam_first_step_matches_hand_formula():
    """First update with constant gradient g: delta = -lr * g / (|g| + eps)."""
    params = init_params(4, 3, 2, 0.0, seed=5)
    before = copy.deepcopy(params)
    lr, eps = 1e-2, 1e-8
    opt = init_optimizer(params, learning_rate=lr, epsilon=eps)
    rng = np.random.default_rng(9)
    from selfmix.encoder import Gradients

    g_emb_rows = np.array([1, 3], dtype=np.int64)
    g_emb_vals = rng.normal(size=(2, 3))
    grads = Gradients(
        g_emb_rows,
        g_emb_vals,
        rng.normal(size=params.w1.shape),
        rng.normal(size=params.b1.shape),
        rng.normal(size=params.w2.shape),
        rng.normal(size=params.b2.shape),
    )
    adam_step(params, grads, opt)
    for name, g in (("w1", grads.w1), ("b1", grads.b1), ("w2", grads.w2), ("b2", grads.b2)):
        expected = getattr(before, name) - lr * g / (np.abs(g) + eps)
        assert np.allclose(getattr(params, name), expected, atol=1e-12)
    expected_rows = before.embedding[g_emb_rows] - lr * g_emb_vals / (
        np.abs(g_emb_vals) + eps
    )
    assert np.allclose(params.embedding[g_emb_rows], expected_rows, atol=1e-12)
    untouched = np.array([0, 2], dtype=np.int64)
    assert np.array_equal(params.embedding[untouched], before.embedding[untouched])


def test_adam_determinism():
    runs = []
    for _ in range(2):
        params = init_params(8, 4, 2, 0.3, seed=6)
        opt = init_optimizer(params, learning_rate=0.05)
        step_rng = np.random.default_rng(77)
        for _ in range(5):
            fv = random_features(step_rng, params.num_buckets)
            target = np.zeros(2)
            target[int(step_rng.integers(2))] = 1.0
            _, grads, _ = backward(params, [BatchItem(fv, "ce", target)], mask_seed=3)
            adam_step(params, grads, opt)
        runs.append(params)
    a, b = runs
    for name in ("embedding", "w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_adam_shape_mismatch_raises():
    params = init_params(8, 4, 2, 0.0, seed=0)
    other = init_params(8, 5, 2, 0.0, seed=0)
    opt = init_optimizer(params)
    _, grads, _ = backward(other, [BatchItem(np.zeros(5), "ce", np.array([1.0, 0.0]))])
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, grads, opt)


def test_lazy_embedding_moments_use_global_step_bias_correction():
    """A row updated for the first time at step t is bias-corrected with t,
    matching a dense reference that saw zero gradients for that row."""
    params = init_params(4, 2, 2, 0.0, seed=1)
    reference = copy.deepcopy(params)
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    opt = init_optimizer(params, learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
    from selfmix.encoder import Gradients

    def sparse(rows_vals):
        rows = np.array(sorted(rows_vals), dtype=np.int64)
        vals = np.stack([rows_vals[int(r)] for r in rows])
        return Gradients(
            rows,
            vals,
            np.zeros_like(params.w1),
            np.zeros_like(params.b1),
            np.zeros_like(params.w2),
            np.zeros_like(params.b2),
        )

    g_row3 = np.array([0.5, -0.2])
    # step 1 touches row 0 only; step 2 touches row 3 for the first time
    adam_step(params, sparse({0: np.array([1.0, 1.0])}), opt)
    adam_step(params, sparse({3: g_row3}), opt)
    # dense reference for row 3: zero grad at step 1, g at step 2
    m = (1 - b1) * g_row3  # beta1 * 0 + ...
    v = (1 - b2) * np.square(g_row3)
    t = 2
    expected = reference.embedding[3] - lr * (m / (1 - b1**t)) / (
        np.sqrt(v / (1 - b2**t)) + eps
    )
    assert np.allclose(params.embedding[3], expected, atol=1e-15)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    params = init_params(16, 6, 3, 0.25, seed=42)
    path = tmp_path / "model.smx"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    for name in ("embedding", "w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(loaded, name), getattr(params, name))
    assert loaded.dropout_rate == params.dropout_rate
    # byte determinism: saving again produces identical bytes
    second = tmp_path / "again.smx"
    save_checkpoint(params, second)
    assert path.read_bytes() == second.read_bytes()


def test_checkpoint_magic(tmp_path):
    path = tmp_path / "bad.smx"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    params = init_params(16, 6, 3, 0.25, seed=42)
    path = tmp_path / "model.smx"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_trailing_bytes(tmp_path):
    params = init_params(4, 2, 2, 0.0, seed=0)
    path = tmp_path / "model.smx"
    save_checkpoint(params, path)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(path)


def test_checkpoint_rejects_bad_dimensions(tmp_path):
    import struct

    path = tmp_path / "bad.smx"
    path.write_bytes(b"SMX1" + struct.pack("<qqq", 0, 4, 2))
    with pytest.raises(ValueError, match="dimensions"):
        load_checkpoint(path)


def test_checkpoint_rejects_non_finite(tmp_path):
    params = init_params(4, 2, 2, 0.0, seed=0)
    params.w1[0, 0] = np.nan
    path = tmp_path / "model.smx"
    save_checkpoint(params, path)
    with pytest.raises(ValueError, match="non-finite"):
        load_checkpoint(path)


def test_init_params_validates_dropout():
    with pytest.raises(ValueError):
        init_params(4, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        init_params(4, 2, 2, -0.1, seed=0)


def test_model_params_shape_properties():
    params = init_params(16, 6, 3, 0.25, seed=0)
    assert isinstance(params, ModelParams)
    assert params.num_buckets == 16
    assert params.hidden == 6
    assert params.num_classes == 3
