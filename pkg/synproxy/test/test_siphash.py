import pytest

from synproxy.utils.siphash import rotl64, siphash24, siphash24_reference

KEY = bytes(range(16))


def test_reference_vectors():
    assert siphash24_reference(KEY, b'') == 0x726fdb47dd0e0e31
    assert siphash24_reference(KEY, bytes(range(15))) == 0xa129ca6149be45e5


def test_rotl64():
    assert rotl64(1, 63) == 1 << 63
    assert rotl64(1 << 63, 1) == 1


def test_bad_key():
    with pytest.raises(ValueError):
        siphash24_reference(b'short', b'')


@pytest.mark.parametrize('n', [0, 7, 8, 9, 13, 16, 31])
def test_fast_path_matches_reference(n):
    data = bytes(range(100, 100 + n))
    assert siphash24(KEY, data) == siphash24_reference(KEY, data)


def test_siphashc_oracle():
    siphashc = pytest.importorskip('siphashc')
    data = bytes(range(13))
    assert siphashc.siphash(KEY, data) == siphash24_reference(KEY, data)
