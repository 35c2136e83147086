"""CoAP codec tests: hand-assembled wire examples, round-trip and fuzz."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coapsec.coap import (
    CODE_GET,
    BadOptionDelta,
    BadTokenLength,
    BadVersion,
    CoapError,
    CoapMessage,
    CoapOption,
    HeaderTooShort,
    MsgType,
    OptionOrderError,
    TruncatedOption,
    coap_parse,
    coap_serialize,
    code_str,
)


def make_message(rng):
    n_opts = rng.randrange(0, 6)
    numbers = sorted(rng.randrange(1, 300) for _ in range(n_opts))
    options = [
        CoapOption(n, rng.randbytes(rng.randrange(0, 16))) for n in numbers
    ]
    return CoapMessage(
        msg_type=MsgType(rng.randrange(4)),
        code=rng.randrange(256),
        message_id=rng.randrange(65536),
        token=rng.randbytes(rng.randrange(0, 9)),
        options=options,
        payload=rng.randbytes(rng.randrange(0, 64)),
    )


class TestWireExamples:
    def test_minimal_con_get(self):
        raw = bytes.fromhex("40010000")
        msg = coap_parse(raw)
        assert msg.msg_type == MsgType.CONFIRMABLE
        assert msg.code == CODE_GET
        assert msg.token == b""
        assert msg.message_id == 0
        assert msg.options == []
        assert msg.payload == b""
        assert coap_serialize(msg) == raw

    def test_uri_path_and_payload(self):
        msg = CoapMessage(
            MsgType.CONFIRMABLE, CODE_GET, 0, b"", [CoapOption(11, b"s")], b"\x01"
        )
        assert coap_serialize(msg) == bytes.fromhex("40010000") + b"\xb1s\xff\x01"

    def test_marker_with_empty_payload_rejected(self):
        with pytest.raises((TruncatedOption, BadOptionDelta)):
            coap_parse(bytes.fromhex("40010000ff"))

    def test_short_input(self):
        with pytest.raises(HeaderTooShort):
            coap_parse(b"\x40\x01\x00")

    def test_bad_version(self):
        with pytest.raises(BadVersion):
            coap_parse(bytes.fromhex("80010000"))

    def test_bad_token_length(self):
        # TKL = 9 is reserved
        with pytest.raises(BadTokenLength):
            coap_parse(bytes.fromhex("49010000") + b"x" * 9)

    def test_reserved_delta_nibble(self):
        # delta nibble 15 in a byte that is not the payload marker
        with pytest.raises(BadOptionDelta):
            coap_parse(bytes.fromhex("40010000f1"))

    def test_truncated_option_value(self):
        with pytest.raises(TruncatedOption):
            coap_parse(bytes.fromhex("40010000b5") + b"ab")

    def test_extended_deltas(self):
        msg = CoapMessage(
            MsgType.NON_CONFIRMABLE,
            0x45,
            7,
            b"\xaa",
            [CoapOption(11, b"a"), CoapOption(300, b"bb"), CoapOption(2000, b"")],
            b"xyz",
        )
        parsed = coap_parse(coap_serialize(msg))
        assert parsed == msg

    def test_unsorted_options_rejected(self):
        msg = CoapMessage(
            MsgType.CONFIRMABLE,
            CODE_GET,
            1,
            b"",
            [CoapOption(11, b""), CoapOption(3, b"")],
        )
        with pytest.raises(OptionOrderError):
            coap_serialize(msg)

    def test_code_str(self):
        assert code_str(0x01) == "0.01"
        assert code_str(0x44) == "2.04"
        assert code_str(0x45) == "2.05"


class TestProperties:
    def test_roundtrip_randomized(self):
        rng = random.Random(0xC0AB)
        for _ in range(2000):
            msg = make_message(rng)
            raw = coap_serialize(msg)
            parsed = coap_parse(raw)
            assert parsed == msg
            assert coap_serialize(parsed) == raw

    def test_delta_reconstruction(self):
        rng = random.Random(3)
        for _ in range(200):
            msg = make_message(rng)
            parsed = coap_parse(coap_serialize(msg))
            assert [o.number for o in parsed.options] == [
                o.number for o in msg.options
            ]

    def test_truncation_fuzz(self):
        rng = random.Random(0xBEEF)
        for _ in range(200):
            raw = coap_serialize(make_message(rng))
            for cut in range(len(raw)):
                try:
                    coap_parse(raw[:cut])
                except CoapError:
                    pass

    @given(st.binary(max_size=1024))
    @settings(max_examples=1000)
    def test_parser_total(self, data):
        try:
            coap_parse(data)
        except CoapError:
            pass
