import random

import pytest

from pharmachain.canonical import HashDigest, ZERO_DIGEST, canonical_json, hash_obj, hash_payload

SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_empty_payload_has_the_standard_digest():
    assert hash_payload(b"").hex() == SHA256_EMPTY


def test_hashing_is_deterministic():
    payload = b"some bytes worth hashing"
    assert hash_payload(payload) == hash_payload(payload)


def test_bit_flips_change_the_digest():
    rng = random.Random(7)
    for _ in range(1000):
        payload = bytearray(rng.randbytes(rng.randint(1, 64)))
        original = hash_payload(bytes(payload))
        position = rng.randrange(len(payload) * 8)
        payload[position // 8] ^= 1 << (position % 8)
        assert hash_payload(bytes(payload)) != original


def test_digest_hex_is_lowercase_64_chars():
    digest = hash_payload(b"x")
    assert len(digest.hex()) == 64
    assert digest.hex() == digest.hex().lower()
    assert HashDigest.from_hex(digest.hex()) == digest


def test_digest_rejects_wrong_sizes():
    with pytest.raises(ValueError):
        HashDigest(b"short")
    with pytest.raises(ValueError):
        HashDigest.from_hex("ab" * 31)
    with pytest.raises(ValueError):
        HashDigest.from_hex(SHA256_EMPTY.upper())


def test_zero_digest_renders_as_64_zeros():
    assert ZERO_DIGEST.hex() == "0" * 64


def test_canonical_json_sorts_keys_and_strips_whitespace():
    assert canonical_json({"b": 1, "a": [2, {"d": 3, "c": 4}]}) == b'{"a":[2,{"c":4,"d":3}],"b":1}'


def test_canonical_json_rejects_floats_anywhere():
    with pytest.raises(TypeError):
        canonical_json({"temp": 25.0})
    with pytest.raises(TypeError):
        canonical_json([1, [2, [3.5]]])


def test_canonical_json_rejects_non_string_keys():
    with pytest.raises(TypeError):
        canonical_json({1: "x"})


def test_hash_obj_is_stable_across_key_order():
    assert hash_obj({"a": 1, "b": 2}) == hash_obj({"b": 2, "a": 1})
