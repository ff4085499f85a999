import numpy as np
import pytest

from pseudosdf import signconfig as sc


def all_sign_vectors():
    bits = (np.arange(256)[:, None] >> np.arange(8)) & 1
    return np.where(bits == 1, -1, 1)


def test_all_equal_signs_give_code_zero():
    assert sc.encode([1] * 8) == 0
    assert sc.encode([-1] * 8) == 0


def test_single_disagreement_sets_bit_zero():
    assert sc.encode([1, -1, 1, 1, 1, 1, 1, 1]) == 1


def test_decode_known_codes():
    assert list(sc.decode(0)) == [1] * 8
    assert list(sc.decode(127)) == [1, -1, -1, -1, -1, -1, -1, -1]


def test_round_trip_all_codes():
    for code in range(128):
        assert sc.encode(sc.decode(code)) == code


def test_global_flip_symmetry_exhaustive():
    signs = all_sign_vectors()
    codes = sc.encode_batch(signs)
    flipped = sc.encode_batch(-signs)
    assert (codes == flipped).all()


def test_decode_encode_is_anchor_normalization():
    # decode(encode(s)) equals s or -s, with the anchor forced positive
    for s in all_sign_vectors():
        normalized = sc.decode(sc.encode(s))
        assert normalized[0] == 1
        assert (normalized == s).all() or (normalized == -s).all()


def test_encode_rejects_zero_entries():
    with pytest.raises(ValueError):
        sc.encode([1, 0, 1, 1, 1, 1, 1, 1])


def test_decode_rejects_out_of_range():
    with pytest.raises(ValueError):
        sc.decode(128)
    with pytest.raises(ValueError):
        sc.edge_flips(128)


def test_edge_flips_against_direct_comparison():
    # brute force over all 128 codes and 12 edges
    for code in range(128):
        signs = sc.decode(code)
        mask = sc.edge_flips(code)
        for e, (a, b) in enumerate(sc.EDGE_CORNERS):
            assert mask[e] == (signs[a] != signs[b])


def test_edge_flips_code_zero_and_127():
    assert not sc.edge_flips(0).any()
    # code 127: corner 0 disagrees with everybody, so exactly the 3 edges
    # incident to corner 0 flip (computed, not assumed)
    mask = sc.edge_flips(127)
    incident = [e for e, (a, b) in enumerate(sc.EDGE_CORNERS) if 0 in (a, b)]
    expected = np.zeros(12, dtype=bool)
    expected[incident] = True
    assert (mask == expected).all()


def test_multilabel_round_trip():
    assert sc.from_multilabel(sc.to_multilabel(0)) == 0
    assert not sc.to_multilabel(0).any()
    assert sc.to_multilabel(127).all()
    for code in range(128):
        assert sc.from_multilabel(sc.to_multilabel(code)) == code


def test_corner_offsets_bijection():
    offsets = {tuple(off) for off in sc.CORNER_OFFSETS}
    assert len(offsets) == 8
    for i, off in enumerate(sc.CORNER_OFFSETS):
        assert i == off[0] + 2 * off[1] + 4 * off[2]
