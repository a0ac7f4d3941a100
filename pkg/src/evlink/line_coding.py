"""8b/10b line coding and frame sync.

Standard IBM-style data code groups (D.x.y) built from the 5b/6b and 3b/4b
sub-tables, with running-disparity selection and the alternate D.x.7 rule.
K28.5 is the only control character used; four of them in a row form the
frame sync, and the comma bit pattern inside K28.5 cannot appear in any
concatenation of data groups, which is what makes blind alignment possible.

Bit order within a group is transmission order: a b c d e i f g h j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import LINE_CODED, BitStream

RD_MINUS = -1
RD_PLUS = 1

SYNC_REPEAT = 4          # K28.5 groups per frame sync
SYNC_BITS = SYNC_REPEAT * 10
SUBSTITUTE_BYTE = 0x00   # emitted for invalid / disparity-violating groups


class AlignmentError(RuntimeError):
    """No frame sync found in the bit stream."""


# 5b/6b sub-table, RD=-1 column, bits abcdei msb-first, indexed by the five
# low input bits (EDCBA). Unbalanced entries are complemented at RD=+1;
# D.7's balanced 111000 also flips (to 000111) to bound run length.
_TABLE_6B = (
    0b100111, 0b011101, 0b101101, 0b110001, 0b110101, 0b101001, 0b011001,
    0b111000, 0b111001, 0b100101, 0b010101, 0b110100, 0b001101, 0b101100,
    0b011100, 0b010111, 0b011011, 0b100011, 0b010011, 0b110010, 0b001011,
    0b101010, 0b011010, 0b111010, 0b110011, 0b100110, 0b010110, 0b110110,
    0b001110, 0b101110, 0b011110, 0b101011,
)
_K28_6B = 0b001111

# 3b/4b sub-table, RD=-1 column, bits fghj msb-first, indexed by the three
# high input bits (HGF). x.3's balanced 1100 flips like D.7 above.
_TABLE_4B = (0b1011, 0b1001, 0b0101, 0b1100, 0b1101, 0b1010, 0b0110, 0b1110)

# Alternate D.x.7 four-bit block, selected to avoid runs of five across the
# sub-block boundary.
_ALT7_NEG = 0b0111
_ALT7_POS = 0b1000
_ALT7_WHEN_NEG = frozenset((17, 18, 20))
_ALT7_WHEN_POS = frozenset((11, 13, 14))


def _disparity(word: int, nbits: int) -> int:
    ones = bin(word).count("1")
    return ones - (nbits - ones)


def _complement(word: int, nbits: int) -> int:
    return ~word & ((1 << nbits) - 1)


def _encode_group(value: int, rd: int, control: bool = False):
    """Encode one byte (or K28.5 when control) at running disparity rd.

    Returns (10-bit group msb-first in transmission order, rd_out).
    """
    x = value & 0x1F
    y = value >> 5

    if control:
        if value != 0xBC:  # K28.5 is the only control character supported
            raise ValueError("only K28.5 control encoding is supported")
        code6 = _K28_6B
        unbal6 = True
        flip6 = True
    else:
        code6 = _TABLE_6B[x]
        unbal6 = _disparity(code6, 6) != 0
        flip6 = unbal6 or x == 7
    out6 = _complement(code6, 6) if (rd == RD_PLUS and flip6) else code6
    rd_mid = -rd if unbal6 else rd

    use_alt7 = (not control) and y == 7 and (
        (rd_mid == RD_MINUS and x in _ALT7_WHEN_NEG)
        or (rd_mid == RD_PLUS and x in _ALT7_WHEN_POS)
    )
    if use_alt7:
        out4 = _ALT7_NEG if rd_mid == RD_MINUS else _ALT7_POS
        rd_out = -rd_mid
    else:
        code4 = _TABLE_4B[y]
        unbal4 = _disparity(code4, 4) != 0
        if control:
            # The control 4b block complements at the opposite disparity from
            # data: K28.5 is 001111 1010 at RD-, 110000 0101 at RD+.
            out4 = _complement(code4, 4) if rd_mid == RD_MINUS else code4
        else:
            flip4 = unbal4 or y == 3
            out4 = _complement(code4, 4) if (rd_mid == RD_PLUS and flip4) else code4
        rd_out = -rd_mid if unbal4 else rd_mid

    return (out6 << 4) | out4, rd_out


def _build_tables():
    encode = {}
    decode = {}
    for rd in (RD_MINUS, RD_PLUS):
        for byte in range(256):
            code, rd_out = _encode_group(byte, rd)
            encode[(rd, byte)] = (code, rd_out)
            entry = decode.setdefault(code, [byte, False, set()])
            if entry[0] != byte or entry[1]:
                raise AssertionError("8b/10b code table collision")
            entry[2].add(rd)
        code, _ = _encode_group(0xBC, rd, control=True)
        entry = decode.setdefault(code, [0xBC, True, set()])
        if not entry[1]:
            raise AssertionError("K28.5 collides with a data code group")
        entry[2].add(rd)
    return encode, {c: (v, k, frozenset(rds)) for c, (v, k, rds) in decode.items()}


_ENCODE, _DECODE = _build_tables()

K28_5_NEG, _ = _encode_group(0xBC, RD_MINUS, control=True)  # 0b0011111010
K28_5_POS, _ = _encode_group(0xBC, RD_PLUS, control=True)   # 0b1100000101

# group int -> its 10 bits in transmission order
_GROUP_BITS = np.array(
    [[(code >> (9 - i)) & 1 for i in range(10)] for code in range(1024)],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class CodeGroup:
    """One encoded 10-bit group with the disparity it consumes/produces."""

    bits: tuple
    disparity_in: int
    disparity_out: int

    def __post_init__(self):
        if len(self.bits) != 10:
            raise ValueError("a code group is exactly 10 bits")
        d = sum(self.bits) * 2 - 10
        if d not in (-2, 0, 2):
            raise ValueError("code group disparity must be -2, 0, or +2")


def encode_byte(byte: int, rd: int, control: bool = False) -> CodeGroup:
    """Encode a single byte to a CodeGroup (mainly for tests and tooling)."""
    _check_rd(rd)
    code, rd_out = _encode_group(byte, rd, control=control)
    return CodeGroup(tuple(int(b) for b in _GROUP_BITS[code]), rd, rd_out)


def _check_rd(rd):
    if rd not in (RD_MINUS, RD_PLUS):
        raise ValueError("initial disparity must be -1 or +1")


def encode_8b10b(payload: bytes, initial_disparity: int = RD_MINUS) -> BitStream:
    """Encode a byte payload to line bits (10 per byte), tracking disparity."""
    _check_rd(initial_disparity)
    if len(payload) == 0:
        raise ValueError("payload must be non-empty")
    rd = initial_disparity
    codes = np.empty(len(payload), dtype=np.int64)
    for i, byte in enumerate(payload):
        code, rd = _ENCODE[(rd, byte)]
        codes[i] = code
    return BitStream(_GROUP_BITS[codes].reshape(-1), origin=LINE_CODED)


def decode_8b10b(bits, initial_disparity: int = RD_MINUS):
    """Decode line bits back to bytes.

    Returns (payload bytes, per-group error flags). Invalid groups and
    disparity violations are flagged and substituted with 0x00 so error
    accounting can continue across corrupted regions.
    """
    _check_rd(initial_disparity)
    arr = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if arr.size % 10 != 0:
        raise ValueError(f"bit length {arr.size} not divisible by 10")
    n_groups = arr.size // 10
    groups = arr.reshape(n_groups, 10)
    codes = groups @ (1 << np.arange(9, -1, -1, dtype=np.int64))
    ones = groups.sum(axis=1).astype(np.int64)

    out = np.zeros(n_groups, dtype=np.uint8)
    flags = np.zeros(n_groups, dtype=bool)
    rd = initial_disparity
    for i in range(n_groups):
        code = int(codes[i])
        d = int(ones[i]) * 2 - 10
        entry = _DECODE.get(code)
        if entry is None or entry[1]:  # unknown word, or control char in payload
            flags[i] = True
            out[i] = SUBSTITUTE_BYTE
            if d > 0:
                rd = RD_PLUS
            elif d < 0:
                rd = RD_MINUS
            continue
        value, _, legal_rds = entry
        if rd in legal_rds:
            out[i] = value
        else:
            flags[i] = True
            out[i] = SUBSTITUTE_BYTE
        rd = -rd if d != 0 else rd
    return out.tobytes(), flags


@dataclass(frozen=True)
class Frame:
    """Sync (4x K28.5) followed by an 8b/10b-coded payload."""

    payload: bytes

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def n_line_bits(self) -> int:
        return SYNC_BITS + 10 * len(self.payload)


def frame_payload(payload: bytes, initial_disparity: int = RD_MINUS) -> BitStream:
    """Build the line bits of one frame: K28.5 x4 sync, then the payload."""
    _check_rd(initial_disparity)
    if len(payload) == 0:
        raise ValueError("payload must be non-empty")
    rd = initial_disparity
    codes = []
    for _ in range(SYNC_REPEAT):
        code, rd = _encode_group(0xBC, rd, control=True)
        codes.append(code)
    for byte in payload:
        code, rd = _ENCODE[(rd, byte)]
        codes.append(code)
    return BitStream(_GROUP_BITS[np.asarray(codes)].reshape(-1), origin=LINE_CODED)


def _window_codes(arr: np.ndarray) -> np.ndarray:
    """10-bit group value starting at every bit offset."""
    n = arr.size - 9
    vals = np.zeros(n, dtype=np.int64)
    for j in range(10):
        vals += arr[j:j + n].astype(np.int64) << (9 - j)
    return vals


def align_and_extract(bits):
    """Locate the first frame sync and return (payload bits, sync offset).

    The sync is four consecutive K28.5 groups with alternating disparity
    variants; requiring the full 40-bit pattern makes a false match in
    random bits vanishingly unlikely (~2^-39 per offset).
    """
    arr = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if arr.size < SYNC_BITS:
        raise AlignmentError("bit stream shorter than one frame sync")
    vals = _window_codes(arr)
    candidates = np.nonzero((vals == K28_5_NEG) | (vals == K28_5_POS))[0]
    for i in candidates:
        if i + SYNC_BITS > arr.size:
            break
        want = int(vals[i])
        ok = True
        for g in range(1, SYNC_REPEAT):
            pos = i + 10 * g
            want = K28_5_POS if want == K28_5_NEG else K28_5_NEG
            if pos >= vals.size or vals[pos] != want:
                ok = False
                break
        if ok:
            return BitStream(arr[i + SYNC_BITS:], origin=LINE_CODED), int(i)
    raise AlignmentError("no frame sync found")
