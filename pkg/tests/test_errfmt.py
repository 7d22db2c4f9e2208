from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_err_list
from mizremote.errfmt import (
    Diagnostic,
    ErrParseError,
    MsgParseError,
    annotate,
    builtin_catalog,
    parse_err,
    parse_msg_catalog,
    serialize_err,
    sort_diagnostics,
)


class TestDiagnostic:
    def test_fields_must_be_positive(self):
        with pytest.raises(ValueError):
            Diagnostic(0, 1, 1)
        with pytest.raises(ValueError):
            Diagnostic(1, 0, 1)
        with pytest.raises(ValueError):
            Diagnostic(1, 1, 0)

    def test_ordering_is_line_column_code(self):
        items = [
            Diagnostic(2, 1, 9),
            Diagnostic(1, 9, 1),
            Diagnostic(1, 2, 5),
            Diagnostic(1, 2, 4),
        ]
        assert sort_diagnostics(items) == [
            Diagnostic(1, 2, 4),
            Diagnostic(1, 2, 5),
            Diagnostic(1, 9, 1),
            Diagnostic(2, 1, 9),
        ]


class TestErrCodec:
    def test_serialize_shape(self):
        data = serialize_err([Diagnostic(4, 13, 1101), Diagnostic(9, 1, 1002)])
        assert data == b"4 13 1101\n9 1 1002\n"

    def test_empty_list_serializes_to_empty_bytes(self):
        assert serialize_err([]) == b""
        assert parse_err(b"") == []

    def test_parse_tolerates_crlf(self):
        assert parse_err(b"1 2 3\r\n4 5 6\r\n") == [
            Diagnostic(1, 2, 3),
            Diagnostic(4, 5, 6),
        ]

    def test_parse_sorts(self):
        assert parse_err(b"9 1 1\n1 1 9\n") == [
            Diagnostic(1, 1, 9),
            Diagnostic(9, 1, 1),
        ]

    def test_parse_requires_final_newline_consistency(self):
        # A missing final newline is accepted: the last line still parses.
        assert parse_err(b"1 2 3") == [Diagnostic(1, 2, 3)]

    @pytest.mark.parametrize(
        "payload",
        [
            b"1 2\n",
            b"1 2 3 4\n",
            b"1  2 3\n",
            b"a 2 3\n",
            b"1 2 -3\n",
            b"0 2 3\n",
            b"1 2 3.5\n",
            b"\x80\x81\n",
            b"1\t2\t3\n",
            b"1 2 3\n\n1 2 3\n",
        ],
    )
    def test_malformed_rejected(self, payload):
        with pytest.raises(ErrParseError):
            parse_err(payload)

    def test_error_reports_err_line_number(self):
        with pytest.raises(ErrParseError) as info:
            parse_err(b"1 2 3\nbroken\n")
        assert info.value.line == 2

    def test_round_trip_random(self):
        rng = random.Random(99)
        for _ in range(300):
            errs = sort_diagnostics(Diagnostic(*t) for t in random_err_list(rng))
            assert parse_err(serialize_err(errs)) == errs

    @given(
        st.lists(
            st.tuples(
                st.integers(1, 10**6),
                st.integers(1, 10**4),
                st.integers(1, 10**5),
            ),
            max_size=50,
        )
    )
    @settings(max_examples=300, deadline=None)
    def test_round_trip_property(self, triples):
        errs = sort_diagnostics(Diagnostic(*t) for t in triples)
        assert parse_err(serialize_err(errs)) == errs

    @given(st.binary(max_size=200))
    @settings(max_examples=500, deadline=None)
    def test_parse_total(self, data):
        # Any byte string either parses or raises ErrParseError; nothing else.
        try:
            items = parse_err(data)
        except ErrParseError:
            return
        assert items == sort_diagnostics(items)


class TestMsgCatalog:
    def test_parse_pairs(self):
        data = b"# 1001\nUnmatched end\n# 1101\nReference to undefined label\n"
        assert parse_msg_catalog(data) == {
            1001: "Unmatched end",
            1101: "Reference to undefined label",
        }

    def test_blank_lines_between_entries_allowed(self):
        data = b"# 7\nSeven\n\n\n# 8\nEight\n"
        assert parse_msg_catalog(data) == {7: "Seven", 8: "Eight"}

    def test_crlf_accepted(self):
        assert parse_msg_catalog(b"# 5\r\nFive\r\n") == {5: "Five"}

    def test_message_may_contain_hash(self):
        assert parse_msg_catalog(b"# 5\n# looks like a header\n# 6\nSix\n") == {
            5: "# looks like a header",
            6: "Six",
        }

    @pytest.mark.parametrize(
        "payload",
        [
            b"1001\nNo header marker\n",
            b"# x\nBad code\n",
            b"# 0\nZero code\n",
            b"# 5\n",
            b"# 5\n   \n",
            b"#5\nMissing space\n",
            b"\xff\xfe\n",
        ],
    )
    def test_malformed_rejected(self, payload):
        with pytest.raises(MsgParseError):
            parse_msg_catalog(payload)

    def test_later_entry_wins_on_duplicate_code(self):
        data = b"# 5\nFirst\n# 5\nSecond\n"
        assert parse_msg_catalog(data) == {5: "Second"}


class TestAnnotate:
    def test_known_and_unknown_codes(self):
        catalog = {1001: "Unmatched end"}
        pairs = annotate(
            [Diagnostic(1, 1, 1001), Diagnostic(2, 2, 4242)], catalog
        )
        assert pairs[0][1] == "Unmatched end"
        assert pairs[1][1] == "Unknown error 4242"


class TestBuiltinCatalog:
    def test_covers_all_emitted_codes(self):
        catalog = builtin_catalog()
        for code in (
            1001,
            1002,
            1003,
            1004,
            1005,
            1101,
            1201,
            1202,
            1203,
            1204,
            1205,
        ):
            assert code in catalog
            assert catalog[code].strip()

    def test_round_trips_through_codec(self):
        catalog = builtin_catalog()
        data = b"".join(
            f"# {code}\n{message}\n".encode() for code, message in catalog.items()
        )
        assert parse_msg_catalog(data) == catalog
