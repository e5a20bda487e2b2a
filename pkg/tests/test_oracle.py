"""Event-probability oracle: keccak vectors, published values, trigger rule."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parinsure._keccak import keccak256
from parinsure.oracle import (
    DescriptionError,
    event_probability,
    is_compensated,
)

# The nine description strings exercised by the reference deployment and
# their published Myriad probabilities.  These pin the byte encoding and
# the digest reduction; see the oracle module docstring.
PUBLISHED_VALUES = {
    "rain": 7164,
    "hail": 315,
    "snow": 5328,
    "hail1": 4496,
    "snow2": 2058,
    "sun": 4188,
    "sun1": 128,
    "wind": 4835,
    "wind9": 1940,
}


class TestKeccak256:
    def test_empty_input_vector(self):
        # Canonical Keccak-256 (pre-FIPS padding) empty-message digest.
        assert (
            keccak256(b"").hex()
            == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        )

    def test_abc_vector(self):
        assert (
            keccak256(b"abc").hex()
            == "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"
        )

    def test_multi_block_input(self):
        # 200 bytes spans two sponge blocks (rate 136); check stability.
        digest = keccak256(b"a" * 200)
        assert digest == keccak256(b"a" * 200)
        assert len(digest) == 32


class TestEventProbability:
    @pytest.mark.parametrize("description,expected", sorted(PUBLISHED_VALUES.items()))
    def test_published_values(self, description, expected):
        assert event_probability(description) == expected

    def test_deterministic(self):
        assert event_probability("monsoon") == event_probability("monsoon")

    def test_empty_description(self):
        with pytest.raises(DescriptionError):
            event_probability("")

    def test_oversized_description(self):
        with pytest.raises(DescriptionError):
            event_probability("x" * 257)

    def test_boundary_values_reachable(self):
        # Searched exhaustively over short alphanumeric strings; the oracle
        # range is inclusive on both ends.
        assert event_probability("oe2") == 0
        assert event_probability("kau") == 10000

    @given(st.text(min_size=1, max_size=64))
    def test_range(self, description):
        assert 0 <= event_probability(description) <= 10000


class TestCompensationTrigger:
    def test_hail_not_compensated(self):
        # P("hail1") = 0.4496 > theta = 0.0315: no payout.
        assert is_compensated("hail", "hail1") is False

    def test_snow_compensated(self):
        # P("snow2") = 0.2058 < theta = 0.5328: payout.
        assert is_compensated("snow", "snow2") is True

    def test_strict_comparison(self):
        assert is_compensated("x", "x") is False

    def test_empty_operands(self):
        with pytest.raises(DescriptionError):
            is_compensated("", "rain")
        with pytest.raises(DescriptionError):
            is_compensated("rain", "")
