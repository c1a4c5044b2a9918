"""Wire codec tests: byte-exact layout oracles, parse errors, round trips."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diamlab.codec import (
    Avp,
    CodecError,
    Dictionary,
    DictEntry,
    Message,
    MessageHeader,
    ParseError,
    ParseErrorKind,
    Violation,
    ViolationKind,
    build_answer,
    build_message,
    decode_message,
    encode_avp,
    encode_message,
    padded_length,
    validate_message,
)

from tests.strategies import messages


class TestPaddedLength:
    def test_ceil_to_boundary(self):
        assert padded_length(5) == 8

    def test_already_aligned(self):
        assert padded_length(8) == 8

    def test_zero(self):
        assert padded_length(0) == 0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            padded_length(-1)

    @given(st.integers(min_value=0, max_value=10**9))
    def test_smallest_multiple_of_four(self, n):
        p = padded_length(n)
        assert p % 4 == 0 and p >= n and p - n < 4


class TestHeaderLayout:
    """Byte-for-byte checks against an independently hand-assembled header."""

    def _hand_encoded_header(self) -> bytes:
        # version 1 | length 20 | flags R | command 700 | app 0 | two ids
        return bytes(
            [0x01, 0x00, 0x00, 0x14, 0x80, 0x00, 0x02, 0xBC]
            + [0x00, 0x00, 0x00, 0x00]
            + [0x11, 0x22, 0x33, 0x44]
            + [0x55, 0x66, 0x77, 0x88]
        )

    def _header_only_message(self) -> Message:
        return build_message(
            700,
            request=True,
            hop_by_hop_id=0x11223344,
            end_to_end_id=0x55667788,
        )

    def test_header_only_message_is_20_bytes(self):
        assert encode_message(self._header_only_message()) == self._hand_encoded_header()

    def test_header_only_decodes_to_empty_avp_list(self):
        msg = decode_message(self._hand_encoded_header())
        assert isinstance(msg, Message)
        assert msg.avps == ()
        assert msg.header.command_code == 700
        assert msg.header.request and not msg.header.error
        assert msg.header.hop_by_hop_id == 0x11223344
        assert msg.header.message_length == 20

    def test_one_avp_with_five_data_bytes(self):
        # AVP: code 2005, mandatory, 5 data bytes -> 8 header + 5 data + 3 pad
        msg = build_message(
            700,
            request=True,
            hop_by_hop_id=0x11223344,
            end_to_end_id=0x55667788,
            avps=[Avp(code=2005, data=b"abcde", mandatory=True)],
        )
        expected_avp = bytes(
            [0x00, 0x00, 0x07, 0xD5, 0x40, 0x00, 0x00, 0x0D]
        ) + b"abcde" + b"\x00\x00\x00"
        encoded = encode_message(msg)
        assert len(encoded) == 36
        assert encoded[1:4] == bytes([0x00, 0x00, 0x24])
        assert encoded[20:] == expected_avp
        assert decode_message(encoded) == msg

    def test_flag_bit_positions(self):
        base = encode_message(build_message(700))
        assert base[4] == 0x00
        assert encode_message(build_message(700, request=True))[4] == 0x80
        assert encode_message(build_message(700, proxiable=True))[4] == 0x40
        assert encode_message(build_message(700, error=True))[4] == 0x20
        assert encode_message(build_message(700, retransmit=True))[4] == 0x10

    def test_vendor_avp_layout(self):
        avp = Avp(code=9, data=b"xy", vendor_id=0xDEADBEEF, mandatory=True)
        raw = encode_avp(avp)
        # 4 code | 1 flags (V+M) | 3 length (14) | 4 vendor | 2 data | 2 pad
        assert raw[:8] == bytes([0, 0, 0, 9, 0xC0, 0, 0, 14])
        assert raw[8:12] == bytes([0xDE, 0xAD, 0xBE, 0xEF])
        assert raw[12:14] == b"xy"
        assert raw[14:] == b"\x00\x00"


class TestDecodeErrors:
    def test_empty_input(self):
        assert decode_message(b"") == ParseError(ParseErrorKind.TRUNCATED, 0)

    def test_short_input(self):
        err = decode_message(b"\x01\x00\x00\x14")
        assert err == ParseError(ParseErrorKind.TRUNCATED, 4)

    def test_bad_version(self):
        data = bytearray(encode_message(build_message(700)))
        data[0] = 2
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.BAD_VERSION, 0)

    def test_declared_length_not_multiple_of_four(self):
        data = bytearray(encode_message(build_message(700)))
        data[3] = 0x15
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.BAD_LENGTH, 1)

    def test_declared_length_below_header(self):
        data = bytearray(encode_message(build_message(700)))
        data[3] = 0x10
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.BAD_LENGTH, 1)

    def test_declared_length_beyond_input_is_truncated(self):
        data = encode_message(build_message(700))[:-4]
        assert decode_message(data) == ParseError(ParseErrorKind.TRUNCATED, 16)

    def test_trailing_bytes_rejected(self):
        data = encode_message(build_message(700)) + b"\x00\x00\x00\x00"
        assert decode_message(data) == ParseError(ParseErrorKind.BAD_LENGTH, 1)

    def test_reserved_header_flag_bits(self):
        data = bytearray(encode_message(build_message(700)))
        data[4] |= 0x08
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.BAD_PADDING, 4)

    def test_avp_overrun(self):
        msg = build_message(700, avps=[Avp(code=1, data=b"abcd")])
        data = bytearray(encode_message(msg))
        data[27] = 0x20  # AVP length now says 32, only 12 bytes remain
        err = decode_message(bytes(data))
        assert err == ParseError(ParseErrorKind.AVP_OVERRUN, 20)

    def test_avp_length_below_its_header(self):
        msg = build_message(700, avps=[Avp(code=1, data=b"abcd")])
        data = bytearray(encode_message(msg))
        data[27] = 0x04
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.BAD_LENGTH, 25)

    def test_nonzero_padding_rejected(self):
        msg = build_message(700, avps=[Avp(code=1, data=b"abc")])
        data = bytearray(encode_message(msg))
        assert data[-1] == 0
        data[-1] = 0xFF
        err = decode_message(bytes(data))
        assert err.kind is ParseErrorKind.BAD_PADDING
        assert err.offset == len(data) - 1

    def test_dangling_partial_avp_header(self):
        # declared length leaves 4 body bytes: too short for an AVP header
        data = bytearray(encode_message(build_message(700)))
        data[3] = 0x18
        data.extend(b"\x00\x00\x00\x01")
        assert decode_message(bytes(data)) == ParseError(ParseErrorKind.AVP_OVERRUN, 20)

    def test_offsets_stay_within_input(self):
        rng = random.Random(99)
        for _ in range(500):
            blob = rng.randbytes(rng.randrange(0, 80))
            out = decode_message(blob)
            if isinstance(out, ParseError):
                assert 0 <= out.offset <= len(blob)


class TestEncodeErrors:
    def test_vendor_flag_contradiction_rejected(self):
        bad = Avp(code=1, data=b"", vendor_id=None, vendor_specific=True)
        with pytest.raises(CodecError):
            encode_message(build_message(700, avps=[bad]))

    def test_vendor_id_without_flag_rejected(self):
        bad = Avp(code=1, data=b"", vendor_id=5, vendor_specific=False)
        with pytest.raises(CodecError):
            encode_avp(bad)

    def test_command_code_range(self):
        with pytest.raises(CodecError):
            encode_message(build_message(0x1000000))

    def test_application_id_range(self):
        with pytest.raises(CodecError):
            encode_message(build_message(700, application_id=2**32))


@pytest.fixture
def tiny_dictionary() -> Dictionary:
    return Dictionary(
        entries={
            (1, None): DictEntry("counter", "unsigned32", True),
            (2, None): DictEntry("wide", "unsigned64", False),
            (3, None): DictEntry("blob", "octet-string", False),
            (4, None): DictEntry("name", "utf8-text", False),
            (5, None): DictEntry("addr", "address", False),
            (6, None): DictEntry("bundle", "grouped", False),
        }
    )


class TestValidate:
    def test_unknown_mandatory_avp(self, tiny_dictionary):
        msg = build_message(700, avps=[Avp(code=999999, data=b"x", mandatory=True)])
        out = validate_message(msg, tiny_dictionary)
        assert out == [Violation(ViolationKind.UNSUPPORTED_MANDATORY_AVP, 999999, 0)]

    def test_unknown_optional_avp_is_fine(self, tiny_dictionary):
        msg = build_message(700, avps=[Avp(code=999999, data=b"x", mandatory=False)])
        assert validate_message(msg, tiny_dictionary) == []

    def test_clean_message(self, tiny_dictionary):
        msg = build_message(
            700,
            avps=[
                Avp(code=1, data=(7).to_bytes(4, "big")),
                Avp(code=4, data="hello".encode()),
            ],
        )
        assert validate_message(msg, tiny_dictionary) == []

    def test_unsigned32_with_three_bytes(self, tiny_dictionary):
        # length table oracle: unsigned32 must be exactly 4 bytes
        msg = build_message(700, avps=[Avp(code=1, data=b"\x00\x00\x01")])
        out = validate_message(msg, tiny_dictionary)
        assert out == [Violation(ViolationKind.BAD_AVP_LENGTH, 1, 0)]

    def test_unsigned64_length(self, tiny_dictionary):
        good = build_message(700, avps=[Avp(code=2, data=bytes(8))])
        bad = build_message(700, avps=[Avp(code=2, data=bytes(4))])
        assert validate_message(good, tiny_dictionary) == []
        assert len(validate_message(bad, tiny_dictionary)) == 1

    def test_address_lengths(self, tiny_dictionary):
        for size, ok in ((4, True), (16, True), (6, False), (0, False)):
            msg = build_message(700, avps=[Avp(code=5, data=bytes(size))])
            assert (validate_message(msg, tiny_dictionary) == []) is ok

    def test_grouped_one_level(self, tiny_dictionary):
        inner = encode_avp(Avp(code=3, data=b"inner"))
        good = build_message(700, avps=[Avp(code=6, data=inner)])
        bad = build_message(700, avps=[Avp(code=6, data=b"\x01\x02\x03")])
        assert validate_message(good, tiny_dictionary) == []
        assert validate_message(bad, tiny_dictionary) == [
            Violation(ViolationKind.BAD_AVP_LENGTH, 6, 0)
        ]

    def test_one_violation_per_problem(self, tiny_dictionary):
        msg = build_message(
            700,
            avps=[
                Avp(code=999999, data=b"", mandatory=True),
                Avp(code=1, data=b"\x01"),
            ],
        )
        kinds = [v.kind for v in validate_message(msg, tiny_dictionary)]
        assert kinds == [
            ViolationKind.UNSUPPORTED_MANDATORY_AVP,
            ViolationKind.BAD_AVP_LENGTH,
        ]


class TestRoundTripProperties:
    @given(messages())
    @settings(max_examples=300)
    def test_decode_inverts_encode(self, msg):
        assert decode_message(encode_message(msg)) == msg

    @given(messages())
    @settings(max_examples=200)
    def test_alignment_and_length_honesty(self, msg):
        encoded = encode_message(msg)
        assert len(encoded) % 4 == 0
        assert len(encoded) == msg.header.message_length
        assert int.from_bytes(encoded[1:4], "big") == len(encoded)

    @given(messages())
    @settings(max_examples=200)
    def test_reencode_identity(self, msg):
        encoded = encode_message(msg)
        decoded = decode_message(encoded)
        assert encode_message(decoded) == encoded

    @given(st.binary(max_size=128))
    @settings(max_examples=400)
    def test_decode_is_total_on_arbitrary_bytes(self, blob):
        out = decode_message(blob)
        assert isinstance(out, (Message, ParseError))

    @given(messages(), st.integers(min_value=0, max_value=2**32 - 1), st.integers(0, 200))
    @settings(max_examples=200)
    def test_decode_is_total_on_corrupted_encodings(self, msg, seed, flips):
        data = bytearray(encode_message(msg))
        rng = random.Random(seed)
        for _ in range(min(flips, len(data))):
            data[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
        out = decode_message(bytes(data))
        assert isinstance(out, (Message, ParseError))


class TestBuilders:
    def test_build_answer_echoes_ids(self):
        req = build_message(700, request=True, hop_by_hop_id=77, end_to_end_id=88)
        ans = build_answer(req)
        assert not ans.header.request
        assert ans.header.hop_by_hop_id == 77
        assert ans.header.end_to_end_id == 88
        assert ans.header.command_code == 700

    def test_header_dataclass_defaults(self):
        h = MessageHeader(command_code=1)
        assert h.version == 1
        assert not (h.request or h.proxiable or h.error or h.retransmit)

    def test_avp_vendor_specific_derived(self):
        assert Avp(code=1).vendor_specific is False
        assert Avp(code=1, vendor_id=10).vendor_specific is True
