import itertools
import struct

import numpy as np
import pytest

from twcensor.censornet import (
    AGGREGATORS,
    ModelCheckpoint,
    ModelConfig,
    TwCensorNet,
    UserExample,
    checkpoint_bytes,
    load_checkpoint,
    make_batch,
    parse_checkpoint,
    predict_user,
    save_checkpoint,
)
from twcensor.encoder import fnv1a_64
from twcensor.errors import CorruptCheckpoint, ProfileMissing, ShapeMismatch, VersionMismatch

from toys import end_to_end_error, random_users, toy_config

CONFIGS = list(itertools.product(AGGREGATORS, (False, True), (False, True)))


@pytest.mark.parametrize("agg, meta, prof", CONFIGS)
def test_dimension_ledger(agg, meta, prof):
    c = ModelConfig(aggregator=agg, use_meta=meta, use_profile=prof)
    assert c.d_r == (832 if meta else 768)
    assert c.d_agg == {"conv": 384, "bilstm": 768}.get(agg, c.d_r)
    assert c.d_in == c.d_agg + (768 if prof else 0)
    model = TwCensorNet(c, seed=0)
    assert model.layers["head0"].params["W"].shape == (c.d_in, 512)


def test_variant_names():
    assert ModelConfig("conv", True, True).variant == "Conv + Meta + Profile"
    assert ModelConfig("bilstm").variant == "BiLSTM"


def test_config_round_trip():
    c = toy_config("bilstm", True, False)
    kv = dict(line.split("=", 1) for line in c.to_lines())
    assert ModelConfig.from_mapping(kv) == c
    assert kv["meta_features"].endswith("statuses_count_at_post")


def test_bad_aggregator():
    with pytest.raises(ValueError):
        ModelConfig(aggregator="gru")


def test_representation_dims(rng):
    users = random_users(rng, [3, 2], 768)
    b = make_batch(users)
    plain = TwCensorNet(ModelConfig(use_meta=False), seed=0)
    np.testing.assert_array_equal(plain.represent(b), b.embeddings)
    meta = TwCensorNet(ModelConfig(use_meta=True), seed=0)
    assert meta.represent(b).shape == (2, 3, 832)


def test_identical_tweets_identical_reps(rng):
    e, m = rng.standard_normal(6), rng.gamma(2, 3, 5)
    u = UserExample(0, 1, np.stack([e, e, rng.standard_normal(6)]), np.stack([m, m, m + 1]))
    model = TwCensorNet(toy_config(use_meta=True), seed=0, dtype=np.float64)
    r = model.represent(make_batch([u, u], np.float64), training=True)
    np.testing.assert_array_equal(r[0, 0], r[0, 1])


def test_padded_reps_are_zero(rng):
    model = TwCensorNet(toy_config(use_meta=True), seed=0, dtype=np.float64)
    b = make_batch(random_users(rng, [1, 4], 6), np.float64)
    assert np.all(model.represent(b)[0, 1:] == 0)


def test_shape_mismatch(rng):
    model = TwCensorNet(toy_config(), seed=0)
    with pytest.raises(ShapeMismatch):
        model.predict(random_users(rng, [2], 7))


def test_attention_zero_w_is_mean(rng):
    users = random_users(rng, [4, 2, 5], 6)
    b = make_batch(users, np.float64)
    att = TwCensorNet(toy_config("attention"), seed=0, dtype=np.float64)
    att.layers["attention"].params["w"][...] = 0
    mean = TwCensorNet(toy_config("mean"), seed=0, dtype=np.float64)
    # sum(x / n) and sum(x) / n agree up to rounding
    np.testing.assert_allclose(att.aggregate(b.embeddings, b.mask), mean.aggregate(b.embeddings, b.mask),
                               rtol=0, atol=1e-14)


def _agg_out(model, x):
    return model.aggregate(x[None], np.ones((1, len(x)), bool))[0]


@pytest.mark.parametrize("agg", ["mean", "max", "attention"])
def test_permutation_invariance(agg, rng):
    model = TwCensorNet(toy_config(agg), seed=3, dtype=np.float64)
    x = rng.standard_normal((7, 6))
    for _ in range(5):
        perm = rng.permutation(7)
        drift = np.abs(_agg_out(model, x) - _agg_out(model, x[perm])).max()
        assert drift == 0 if agg == "max" else drift <= 1e-6


@pytest.mark.parametrize("agg", ["conv", "bilstm"])
def test_order_sensitivity_witness(agg):
    rng = np.random.default_rng(11)
    model = TwCensorNet(toy_config(agg), seed=3, dtype=np.float64)
    x = rng.standard_normal((3, 6))
    assert np.abs(_agg_out(model, x) - _agg_out(model, x[::-1])).max() >= 1e-3


@pytest.mark.parametrize("agg, dim", [("conv", 384), ("bilstm", 768)])
def test_full_size_aggregator_dims(agg, dim, rng):
    model = TwCensorNet(ModelConfig(aggregator=agg), seed=0)
    for n in (1, 7, 50):
        users = random_users(rng, [n, max(1, n // 2)], 768)
        b = make_batch(users)
        assert model.aggregate(model.represent(b), b.mask).shape == (2, dim)


def test_zero_out_layer_gives_half(rng):
    model = TwCensorNet(toy_config("conv", True, True), seed=0)
    model.layers["out"].params["W"][...] = 0
    np.testing.assert_array_equal(model.predict(random_users(rng, [3, 5, 1], 6)), 0.5)


def test_eval_deterministic_and_bounded(rng):
    model = TwCensorNet(toy_config("bilstm", True, True), seed=0)
    users = random_users(rng, [3, 5, 1, 2], 6)
    a, b = model.predict(users), model.predict(users)
    np.testing.assert_array_equal(a, b)
    assert np.all((a > 0) & (a < 1))
    assert predict_user(users[0], model) == a[0]


@pytest.mark.parametrize("agg", AGGREGATORS)
def test_padding_neutrality(agg, rng):
    model = TwCensorNet(toy_config(agg, True, True), seed=2, dtype=np.float64)
    # move running statistics off their initial values
    model.forward(make_batch(random_users(rng, [4, 6, 2], 6), np.float64, True), training=True,
                  rng=np.random.default_rng(0))
    users = random_users(rng, [2, 9, 1, 5], 6)
    together = model.predict(users)
    alone = np.array([model.predict([u])[0] for u in users])
    np.testing.assert_allclose(together, alone, atol=1e-6)


def test_profile_missing(rng):
    model = TwCensorNet(toy_config(use_profile=True), seed=0)
    with pytest.raises(ProfileMissing):
        model.predict(random_users(rng, [2, 3], 6, profile=False))


@pytest.mark.parametrize("agg, meta, prof", CONFIGS)
def test_end_to_end_gradient(agg, meta, prof):
    err, per = end_to_end_error(toy_config(agg, meta, prof))
    assert err <= 1e-3, per


def _checkpoint(rng, agg="conv"):
    model = TwCensorNet(toy_config(agg, True, True), seed=4)
    model.forward(make_batch(random_users(rng, [4, 6], 6), np.float32, True), training=True,
                  rng=np.random.default_rng(0))
    return ModelCheckpoint(model, threshold=0.35, metadata={"seed": "4", "epochs_run": "7"})


@pytest.mark.parametrize("agg", AGGREGATORS)
def test_checkpoint_round_trip(agg, rng, tmp_path):
    ckpt = _checkpoint(rng, agg)
    users = random_users(rng, rng.integers(1, 12, 100), 6)
    path = save_checkpoint(ckpt, tmp_path / "m.ckpt")
    back = load_checkpoint(path)
    assert back.config == ckpt.config and back.threshold == 0.35
    assert back.metadata == {"seed": "4", "epochs_run": "7"}
    assert ckpt.model.predict(users).tobytes() == back.model.predict(users).tobytes()
    for k, v in ckpt.model.state().items():
        np.testing.assert_array_equal(back.model.state()[k], v)
    assert checkpoint_bytes(back) == path.read_bytes()


def test_checkpoint_threshold_drives_decisions(rng):
    ckpt = _checkpoint(rng)
    for rec in ckpt.predict(random_users(rng, [3, 2, 5, 1], 6)):
        assert rec.decision == int(rec.score > 0.35) and rec.threshold == 0.35


def _reseal(body):
    return body + struct.pack("<Q", fnv1a_64(body))


def test_checkpoint_edited_shape(rng):
    blob = checkpoint_bytes(_checkpoint(rng))
    name = b"out.b"
    at = blob.index(name) + len(name)
    # rank byte, then the first dim
    edited = bytearray(blob[:-8])
    edited[at + 1: at + 5] = struct.pack("<I", 2)
    with pytest.raises(CorruptCheckpoint):
        parse_checkpoint(bytes(edited) + blob[-8:])
    with pytest.raises(CorruptCheckpoint):
        parse_checkpoint(_reseal(bytes(edited)))


def test_checkpoint_version_and_magic(rng):
    blob = checkpoint_bytes(_checkpoint(rng))
    with pytest.raises(VersionMismatch):
        parse_checkpoint(_reseal(blob[:6] + struct.pack("<I", 2) + blob[10:-8]))
    with pytest.raises(CorruptCheckpoint):
        parse_checkpoint(b"XXXXXX" + blob[6:])
    with pytest.raises(CorruptCheckpoint):
        parse_checkpoint(blob[:-20])
