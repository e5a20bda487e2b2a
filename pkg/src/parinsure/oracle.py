"""Deterministic event-probability oracle and compensation trigger.

An insured event is identified by a short text description ("rain",
"hail", ...).  Its occurrence probability is pseudo-random but fully
deterministic: the Keccak-256 digest of the description's UTF-8 bytes is
read as a big-endian 256-bit integer and reduced to the Myriad scale.

Byte-encoding / reduction choice
--------------------------------
The reduction is ``digest % 10001``, which yields a probability in
``[0, 1]`` **inclusive** of both ends once divided by 10**4.  This was
pinned down empirically: hashing the raw UTF-8 bytes and reducing modulo
10001 reproduces all nine published probabilities of the reference
deployment ("rain" -> 7164, "hail" -> 315, "snow" -> 5328, "hail1" ->
4496, "snow2" -> 2058, "sun" -> 4188, "sun1" -> 128, "wind" -> 4835,
"wind9" -> 1940), while ABI-encoded inputs and a modulo-10000 reduction
match none of them.  The test suite asserts all nine values.

A claim pays out when the observed event's value is *strictly* smaller
than the insured event's value.

Everything here is pure, stateless and thread-safe.
"""

from __future__ import annotations

from parinsure._keccak import keccak256

# Modulus of the digest reduction; probabilities land in 0..10000 at
# Myriad scale, i.e. [0, 1] inclusive.
PROBABILITY_MODULUS = 10_001

# Ledger records keep descriptions small.
MAX_DESCRIPTION_BYTES = 256


class DescriptionError(ValueError):
    """Event description is empty or too long."""


def encode_description(description: str) -> bytes:
    """Validate a description and return the bytes fed to the hash."""
    if not description:
        raise DescriptionError("event description must be non-empty")
    raw = description.encode("utf-8")
    if len(raw) > MAX_DESCRIPTION_BYTES:
        raise DescriptionError(
            f"event description exceeds {MAX_DESCRIPTION_BYTES} bytes: {len(raw)}"
        )
    return raw


def event_probability(description: str) -> int:
    """Probability of the described event at Myriad scale (0..10000)."""
    digest = keccak256(encode_description(description))
    return int.from_bytes(digest, "big") % PROBABILITY_MODULUS


def is_compensated(insured: str, observed: str) -> bool:
    """True when the observed event triggers the insured event's payout.

    The trigger fires iff the observed description hashes strictly below
    the insured one; hashing a description against itself never pays.
    """
    return event_probability(observed) < event_probability(insured)
