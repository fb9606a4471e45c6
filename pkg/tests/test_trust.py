"""Trust assignment, the interaction store, and context-adaptive weights."""

import json
import math
import random

import pytest

from authfusion.catalog import DEFAULT_CATALOG, default_catalog
from authfusion.context import ContextState
from authfusion.errors import ConfigError, NoUsableFactorsError
from authfusion.fusion import Policy, Strategy
from authfusion.trust import (
    DEFAULT_TRUST_LEVELS,
    PROMOTION_THRESHOLD,
    SourceClass,
    TrustModel,
    TrustStore,
    assign_trust,
    effective_weights,
    load_trust_model,
)

BY_ID = {f.id: f for f in DEFAULT_CATALOG}


def weighted_policy(weights, threshold=1.0):
    return Policy(Strategy.weighted(threshold), dict(weights))


def test_default_levels():
    assert DEFAULT_TRUST_LEVELS[SourceClass.OWNED] == 1.0
    assert DEFAULT_TRUST_LEVELS[SourceClass.FAMILIAR] == 0.8
    assert DEFAULT_TRUST_LEVELS[SourceClass.SOCIAL_FRIEND] == 0.6
    assert DEFAULT_TRUST_LEVELS[SourceClass.STRANGER] == 0.3
    # ordering is the contract even if the numbers get recalibrated
    levels = [DEFAULT_TRUST_LEVELS[c] for c in SourceClass]
    assert levels == sorted(levels, reverse=True)
    assert PROMOTION_THRESHOLD == 10


def test_assign_trust_per_class():
    for cls in SourceClass:
        a = assign_trust("dev-1", cls)
        assert a.level == DEFAULT_TRUST_LEVELS[cls]
        assert a.source_class is cls
        assert a.interactions_seen == 0


def test_stranger_promotion_at_threshold():
    before = assign_trust("watch-7", SourceClass.STRANGER, history=9)
    assert before.source_class is SourceClass.STRANGER
    assert before.level == 0.3
    at = assign_trust("watch-7", SourceClass.STRANGER, history=10)
    assert at.source_class is SourceClass.FAMILIAR
    assert at.level == 0.8
    assert at.interactions_seen == 10
    # promotion only ever moves strangers; other classes keep their tau
    rich_history = assign_trust("phone-1", SourceClass.SOCIAL_FRIEND, history=500)
    assert rich_history.source_class is SourceClass.SOCIAL_FRIEND
    assert rich_history.level == 0.6


def test_assign_trust_rejects_negative_history():
    with pytest.raises(ConfigError):
        assign_trust("dev-1", SourceClass.OWNED, history=-1)


def test_trust_model_validation():
    with pytest.raises(ConfigError):
        TrustModel(levels={SourceClass.OWNED: 1.0})
    bad = dict(DEFAULT_TRUST_LEVELS)
    bad[SourceClass.STRANGER] = 1.5
    with pytest.raises(ConfigError):
        TrustModel(levels=bad)
    with pytest.raises(ConfigError):
        TrustModel(promotion_threshold=0)


def test_custom_promotion_threshold():
    model = TrustModel(promotion_threshold=3)
    assert assign_trust("x", SourceClass.STRANGER, 2, model).level == 0.3
    assert assign_trust("x", SourceClass.STRANGER, 3, model).level == 0.8


def test_store_counts_only_successes_toward_promotion():
    store = TrustStore()
    for i in range(9):
        store.record("band-2", "success", timestamp=float(i))
    for i in range(50):
        store.record("band-2", "failure", timestamp=100.0 + i)
    assert store.successes("band-2") == 9
    assert store.assignment("band-2", SourceClass.STRANGER).level == 0.3
    store.record("band-2", "success", timestamp=200.0)
    promoted = store.assignment("band-2", SourceClass.STRANGER)
    assert promoted.source_class is SourceClass.FAMILIAR
    assert promoted.level == 0.8


def test_store_rejects_unknown_event():
    store = TrustStore()
    with pytest.raises(ConfigError):
        store.record("band-2", "timeout", timestamp=0.0)


def test_store_jsonl_roundtrip(tmp_path):
    path = tmp_path / "trust.jsonl"
    store = TrustStore(path)
    store.record("ring-1", "success", timestamp=1.0)
    store.record("ring-1", "success", timestamp=2.0)
    store.record("ring-1", "failure", timestamp=3.0)
    store.record("hub-9", "success", timestamp=4.0)

    lines = path.read_text().splitlines()
    assert len(lines) == 4
    first = json.loads(lines[0])
    assert first == {"event": "success", "source_id": "ring-1", "timestamp": 1.0}

    reopened = TrustStore(path)
    assert reopened.successes("ring-1") == 2
    assert reopened.successes("hub-9") == 1
    assert reopened.successes("never-seen") == 0


def test_store_compact_preserves_counts(tmp_path):
    path = tmp_path / "trust.jsonl"
    store = TrustStore(path)
    for i in range(12):
        store.record("watch-3", "success", timestamp=float(i))
    store.record("watch-3", "failure", timestamp=99.0)
    store.compact()
    assert len(path.read_text().splitlines()) == 1

    reopened = TrustStore(path)
    assert reopened.successes("watch-3") == 12
    # appends after a compact land on top of the snapshot
    reopened.record("watch-3", "success", timestamp=100.0)
    assert TrustStore(path).successes("watch-3") == 13


def test_store_without_existing_file(tmp_path):
    store = TrustStore(tmp_path / "fresh.jsonl")
    assert store.successes("anything") == 0
    assert store.assignment("anything", SourceClass.STRANGER).level == 0.3


def test_load_trust_model_overrides():
    model = load_trust_model(
        "schema_version: 1\n"
        "promotion_threshold: 4\n"
        "levels:\n"
        "  stranger: 0.25\n"
        "  social_friend: 0.5\n"
    )
    assert model.levels[SourceClass.STRANGER] == 0.25
    assert model.levels[SourceClass.SOCIAL_FRIEND] == 0.5
    assert model.levels[SourceClass.OWNED] == 1.0
    assert model.promotion_threshold == 4


def test_load_trust_model_rejects_unknown_class():
    text = "schema_version: 1\nlevels:\n  enemy: 0.1\n"
    with pytest.raises(ConfigError) as err:
        load_trust_model(text)
    assert "enemy" in str(err.value)
    assert err.value.line == 3


def test_load_trust_model_rejects_bad_values():
    with pytest.raises(ConfigError):
        load_trust_model("schema_version: 1\nlevels:\n  owned: 1.5\n")
    with pytest.raises(ConfigError):
        load_trust_model("schema_version: 1\npromotion_threshold: 0\n")
    with pytest.raises(ConfigError):
        load_trust_model("schema_version: 1\ndecay: fast\n")


def test_effective_weights_excluded_factor_redistributes():
    catalog = [BY_ID["token"], BY_ID["voice"], BY_ID["facial"], BY_ID["fingerprint"]]
    policy = weighted_policy({f.id: 1.0 for f in catalog}, threshold=2.0)
    out = effective_weights(policy, catalog, ContextState.nominal(gloves_worn=True))
    assert out["fingerprint"] == 0.0
    assert out["token"] == out["voice"] == out["facial"] == 4.0 / 3.0
    assert math.isclose(math.fsum(out.values()), 4.0, rel_tol=1e-12)


def test_effective_weights_penalty_conserves_total():
    catalog = [BY_ID["token"], BY_ID["voice"], BY_ID["facial"]]
    policy = weighted_policy({"token": 1.0, "voice": 2.0, "facial": 1.0})
    out = effective_weights(policy, catalog, ContextState.nominal(noise_level="high"))
    # voice is halved pre-normalization, so it loses share but not everything
    assert 0.0 < out["voice"] < 2.0
    assert out["token"] > 1.0
    assert math.isclose(math.fsum(out.values()), 4.0, rel_tol=1e-12)
    assert math.isclose(out["voice"] / out["token"], 1.0, rel_tol=1e-12)


def test_effective_weights_counting_policy_defaults_to_unit_weights():
    catalog = [BY_ID["token"], BY_ID["facial"], BY_ID["fingerprint"]]
    policy = Policy(Strategy.k_of_n(2))
    out = effective_weights(policy, catalog, ContextState.nominal())
    assert out == {"token": 1.0, "facial": 1.0, "fingerprint": 1.0}
    gloved = effective_weights(policy, catalog, ContextState.nominal(gloves_worn=True))
    assert gloved["fingerprint"] == 0.0
    assert math.isclose(math.fsum(gloved.values()), 3.0, rel_tol=1e-12)


def test_effective_weights_nothing_left():
    catalog = [BY_ID["fingerprint"], BY_ID["vein_recognition"]]
    policy = weighted_policy({"fingerprint": 1.0, "vein_recognition": 1.0})
    with pytest.raises(NoUsableFactorsError):
        effective_weights(policy, catalog, ContextState.nominal(gloves_worn=True))


def test_effective_weights_survivors_carry_no_weight():
    catalog = [BY_ID["fingerprint"], BY_ID["token"]]
    policy = weighted_policy({"fingerprint": 1.0, "token": 0.0})
    with pytest.raises(NoUsableFactorsError):
        effective_weights(policy, catalog, ContextState.nominal(gloves_worn=True))


def test_effective_weights_penalty_validation():
    catalog = [BY_ID["token"]]
    policy = weighted_policy({"token": 1.0})
    ctx = ContextState.nominal()
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ConfigError):
            effective_weights(policy, catalog, ctx, penalty=bad)
    assert effective_weights(policy, catalog, ctx, penalty=1.0) == {"token": 1.0}


def test_effective_weights_requires_every_weight():
    catalog = [BY_ID["token"], BY_ID["facial"]]
    policy = weighted_policy({"token": 1.0})
    with pytest.raises(ConfigError):
        effective_weights(policy, catalog, ContextState.nominal())


def test_weight_conservation_property():
    # whatever the context knocks out, the total effective weight matches
    # the configured total, so a fixed threshold keeps its meaning
    rng = random.Random(20260814)
    full = default_catalog()
    for _ in range(300):
        catalog = rng.sample(full, rng.randint(3, len(full)))
        weights = {f.id: rng.uniform(0.1, 3.0) for f in catalog}
        policy = weighted_policy(weights, threshold=2.0)
        ctx = ContextState.nominal(
            gloves_worn=rng.random() < 0.4,
            darkness=rng.random() < 0.4,
            precipitation=rng.random() < 0.3,
            noise_level="high" if rng.random() < 0.4 else "low",
        )
        try:
            out = effective_weights(policy, catalog, ctx)
        except NoUsableFactorsError:
            continue
        assert set(out) == set(weights)
        assert math.isclose(
            math.fsum(out.values()), math.fsum(weights.values()), rel_tol=1e-12
        )
        for fid, phi in out.items():
            assert phi >= 0.0
            if phi == 0.0:
                continue
            assert weights[fid] > 0.0
