"""Adaptive arithmetic (range) coding.

A 32-bit carry-propagating range coder in the LZMA style driven by adaptive
frequency tables.  Cumulative frequencies live in a Fenwick tree so both
encoding and decoding cost O(log alphabet) per symbol.

The inner loops are numba kernels operating on small state arrays; the
``RangeEncoder`` / ``RangeDecoder`` / ``AdaptiveModel`` classes wrap them.
Several contexts sharing one alphabet are stored as rows of the same model
so a single kernel call can switch between them per symbol.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import DecodeError

INCREMENT = 32
MAX_TOTAL = 1 << 16

_TOP = 1 << 24
_FULL = 0xFFFFFFFF
# Raw payload of an escaped symbol, coded as 4 uniform bytes.
_ESCAPE_BYTES = 4
ESCAPE_LIMIT = 1 << (8 * _ESCAPE_BYTES)
GAMMA_CONTEXTS = 64


# ---------------------------------------------------------------------------
# numba kernels
#
# encoder state: [low, range, cache, cache_size, out_pos]
# decoder state: [range, code, in_pos, overrun]
# model state rows: [total, increment, max_total]
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fenwick_build(freq_row, tree_row):
    n = freq_row.shape[0]
    for i in range(n + 1):
        tree_row[i] = 0
    for i in range(1, n + 1):
        tree_row[i] += freq_row[i - 1]
        j = i + (i & -i)
        if j <= n:
            tree_row[j] += tree_row[i]


@njit(cache=True)
def _fenwick_prefix(tree_row, s):
    acc = 0
    i = s
    while i > 0:
        acc += tree_row[i]
        i -= i & -i
    return acc


@njit(cache=True)
def _fenwick_find(tree_row, n, value):
    # largest pos with prefix(pos) <= value; returns (pos, prefix(pos))
    pos = 0
    acc = 0
    mask = 1
    while mask * 2 <= n:
        mask *= 2
    while mask > 0:
        nxt = pos + mask
        if nxt <= n and acc + tree_row[nxt] <= value:
            pos = nxt
            acc += tree_row[nxt]
        mask >>= 1
    return pos, acc


@njit(cache=True)
def _model_update(freq, tree, mst, c, s):
    inc = mst[c, 1]
    n = freq.shape[1]
    freq[c, s] += inc
    i = s + 1
    while i <= n:
        tree[c, i] += inc
        i += i & -i
    mst[c, 0] += inc
    if mst[c, 0] > mst[c, 2]:
        total = 0
        for k in range(n):
            freq[c, k] = (freq[c, k] + 1) >> 1
            total += freq[c, k]
        mst[c, 0] = total
        _fenwick_build(freq[c], tree[c])


@njit(cache=True)
def _shift_low(st, buf):
    low = st[0]
    if low < 0xFF000000 or low > 0xFFFFFFFF:
        carry = low >> 32
        temp = st[2]
        pos = st[4]
        while True:
            buf[pos] = (temp + carry) & 0xFF
            pos += 1
            temp = 0xFF
            st[3] -= 1
            if st[3] == 0:
                break
        st[4] = pos
        st[2] = (low >> 24) & 0xFF
    st[3] += 1
    st[0] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def _encode_range(st, buf, cum, f, total):
    r = st[1] // total
    st[0] += r * cum
    st[1] = r * f
    while st[1] < _TOP:
        st[1] <<= 8
        _shift_low(st, buf)


@njit(cache=True)
def _encode_symbol(st, buf, freq, tree, mst, c, s):
    cum = _fenwick_prefix(tree[c], s)
    _encode_range(st, buf, cum, freq[c, s], mst[c, 0])
    _model_update(freq, tree, mst, c, s)


@njit(cache=True)
def _read_byte(dst, data):
    pos = dst[2]
    dst[2] = pos + 1
    if pos < data.shape[0]:
        return np.int64(data[pos])
    dst[3] += 1
    return np.int64(0)


@njit(cache=True)
def _decode_range_value(dst, total):
    r = dst[0] // total
    v = dst[1] // r
    if v >= total:
        v = total - 1
    return r, v


@njit(cache=True)
def _decode_consume(dst, data, r, cum, f):
    dst[1] -= r * cum
    dst[0] = r * f
    while dst[0] < _TOP:
        dst[1] = ((dst[1] << 8) | _read_byte(dst, data)) & _FULL
        dst[0] <<= 8


@njit(cache=True)
def _decode_symbol(dst, data, freq, tree, mst, c):
    n = freq.shape[1]
    r, v = _decode_range_value(dst, mst[c, 0])
    s, cum = _fenwick_find(tree[c], n, v)
    if s >= n:
        s = n - 1
        cum = _fenwick_prefix(tree[c], s)
    _decode_consume(dst, data, r, cum, freq[c, s])
    _model_update(freq, tree, mst, c, s)
    return s


@njit(cache=True)
def _encode_symbols(st, buf, syms, ctx, freq, tree, mst, esc):
    for i in range(syms.shape[0]):
        s = syms[i]
        c = ctx[i]
        if esc > 0 and s >= esc:
            _encode_symbol(st, buf, freq, tree, mst, c, esc)
            raw = s - esc
            for k in range(_ESCAPE_BYTES):
                byte = (raw >> (8 * (_ESCAPE_BYTES - 1 - k))) & 0xFF
                _encode_range(st, buf, byte, 1, 256)
        else:
            _encode_symbol(st, buf, freq, tree, mst, c, s)


@njit(cache=True)
def _decode_symbols(dst, data, out, ctx, freq, tree, mst, esc):
    for i in range(out.shape[0]):
        c = ctx[i]
        s = _decode_symbol(dst, data, freq, tree, mst, c)
        if esc > 0 and s == esc:
            raw = 0
            for k in range(_ESCAPE_BYTES):
                r, v = _decode_range_value(dst, 256)
                _decode_consume(dst, data, r, v, 1)
                raw = (raw << 8) | v
            s = esc + raw
        out[i] = s


@njit(cache=True)
def _encode_gamma(st, buf, values, freq, tree, mst):
    # Elias-gamma binarization; prefix bit j uses context j, suffix bit j
    # uses context 32 + j.
    for i in range(values.shape[0]):
        v = values[i]
        nbits = 0
        t = v
        while t > 0:
            nbits += 1
            t >>= 1
        for j in range(nbits - 1):
            _encode_symbol(st, buf, freq, tree, mst, j, 0)
        if nbits - 1 < 32:
            _encode_symbol(st, buf, freq, tree, mst, nbits - 1, 1)
        for j in range(nbits - 2, -1, -1):
            _encode_symbol(st, buf, freq, tree, mst, 32 + j, (v >> j) & 1)


@njit(cache=True)
def _decode_gamma(dst, data, out, freq, tree, mst):
    for i in range(out.shape[0]):
        nbits = 1
        while nbits <= 32 and _decode_symbol(dst, data, freq, tree, mst, nbits - 1) == 0:
            nbits += 1
        if nbits > 32:
            out[i] = -1
            return
        v = 1
        for j in range(nbits - 2, -1, -1):
            v = (v << 1) | _decode_symbol(dst, data, freq, tree, mst, 32 + j)
        out[i] = v


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


class AdaptiveModel:
    """Adaptive frequency table over ``nsymbols`` symbols.

    Every frequency starts at 1 and grows by ``increment`` each time its
    symbol is coded; once the total exceeds ``max_total`` all counts are
    halved (rounding up, so no symbol ever drops to zero).  ``contexts``
    independent tables of the same alphabet may share one model object.
    """

    def __init__(self, nsymbols: int, contexts: int = 1,
                 increment: int = INCREMENT, max_total: int = MAX_TOTAL):
        if nsymbols < 2:
            raise ValueError("alphabet needs at least 2 symbols")
        if nsymbols * (increment + 1) > max_total:
            raise ValueError("max_total too small for this alphabet")
        self.nsymbols = nsymbols
        self.freq = np.ones((contexts, nsymbols), dtype=np.int64)
        self.tree = np.zeros((contexts, nsymbols + 1), dtype=np.int64)
        self.state = np.empty((contexts, 3), dtype=np.int64)
        self.state[:, 0] = nsymbols
        self.state[:, 1] = increment
        self.state[:, 2] = max_total
        for c in range(contexts):
            _fenwick_build(self.freq[c], self.tree[c])

    @property
    def contexts(self) -> int:
        return self.freq.shape[0]

    def total(self, context: int = 0) -> int:
        return int(self.state[context, 0])

    def copy(self) -> "AdaptiveModel":
        other = object.__new__(AdaptiveModel)
        other.nsymbols = self.nsymbols
        other.freq = self.freq.copy()
        other.tree = self.tree.copy()
        other.state = self.state.copy()
        return other

    def __eq__(self, other):
        if not isinstance(other, AdaptiveModel):
            return NotImplemented
        return (self.nsymbols == other.nsymbols
                and np.array_equal(self.freq, other.freq)
                and np.array_equal(self.state, other.state))


def _as_contexts(contexts, n, model):
    if contexts is None:
        return np.zeros(n, dtype=np.int64)
    ctx = np.ascontiguousarray(contexts, dtype=np.int64)
    if ctx.shape != (n,):
        raise ValueError("contexts must align with symbols")
    if n and (ctx.min() < 0 or ctx.max() >= model.contexts):
        raise ValueError("context index out of range")
    return ctx


class RangeEncoder:
    def __init__(self):
        self._st = np.array([0, _FULL, 0, 1, 0], dtype=np.int64)
        self._buf = np.zeros(256, dtype=np.uint8)
        self._done = False

    def _reserve(self, nbytes: int):
        need = int(self._st[4]) + nbytes + 16
        if need > self._buf.shape[0]:
            grown = np.zeros(max(need, 2 * self._buf.shape[0]), dtype=np.uint8)
            grown[: self._buf.shape[0]] = self._buf
            self._buf = grown

    def encode(self, symbols, model: AdaptiveModel, contexts=None,
               escape: bool = False):
        """Code ``symbols`` with ``model``.

        With ``escape`` the last symbol of the alphabet is reserved: values
        at or above it are sent as that symbol plus a 32-bit raw offset.
        """
        if self._done:
            raise RuntimeError("encoder already finished")
        syms = np.ascontiguousarray(symbols, dtype=np.int64).reshape(-1)
        n = syms.shape[0]
        if n == 0:
            return
        esc = model.nsymbols - 1 if escape else 0
        hi = esc + ESCAPE_LIMIT if escape else model.nsymbols
        if syms.min() < 0 or syms.max() >= hi:
            raise ValueError(f"symbol out of alphabet [0, {hi})")
        ctx = _as_contexts(contexts, n, model)
        self._reserve(n * (2 + (_ESCAPE_BYTES if escape else 0)) + 8)
        _encode_symbols(self._st, self._buf, syms, ctx, model.freq, model.tree,
                        model.state, esc)

    def encode_gamma(self, values, model: AdaptiveModel):
        """Code positive integers (< 2**32) as adaptive Elias-gamma bins."""
        vals = np.ascontiguousarray(values, dtype=np.int64).reshape(-1)
        if vals.shape[0] == 0:
            return
        if model.nsymbols != 2 or model.contexts < GAMMA_CONTEXTS:
            raise ValueError("gamma coding needs a binary model with 64 contexts")
        if vals.min() < 1 or vals.max() >= 1 << 32:
            raise ValueError("gamma values must lie in [1, 2**32)")
        nbits = np.floor(np.log2(vals)).astype(np.int64) + 1
        self._reserve(int(2 * (2 * nbits - 1).sum()) + 8)
        _encode_gamma(self._st, self._buf, vals, model.freq, model.tree, model.state)

    def finish(self) -> bytes:
        if not self._done:
            self._reserve(8)
            for _ in range(5):
                _shift_low(self._st, self._buf)
            self._done = True
        return self._buf[: self._st[4]].tobytes()


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8)
        self._st = np.array([_FULL, 0, 0, 0], dtype=np.int64)
        for _ in range(5):
            self._st[1] = ((self._st[1] << 8) | _read_byte(self._st, self._data)) & _FULL
        self._check()

    def _check(self):
        # the decoder never reads past what a matching encoder wrote
        if self._st[3] > 0:
            raise DecodeError("arithmetic-coded payload is truncated",
                              position=len(self._data))

    @property
    def position(self) -> int:
        return int(self._st[2])

    def decode(self, count: int, model: AdaptiveModel, contexts=None,
               escape: bool = False) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        if count == 0:
            return out
        ctx = _as_contexts(contexts, count, model)
        esc = model.nsymbols - 1 if escape else 0
        _decode_symbols(self._st, self._data, out, ctx, model.freq, model.tree,
                        model.state, esc)
        self._check()
        return out

    def decode_gamma(self, count: int, model: AdaptiveModel) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        if count == 0:
            return out
        _decode_gamma(self._st, self._data, out, model.freq, model.tree, model.state)
        self._check()
        if out.min() < 1:
            raise DecodeError("invalid Elias-gamma code", position=self.position)
        return out


def ac_encode(symbols, model: AdaptiveModel | None = None, nsymbols: int = 256) -> bytes:
    """Encode a whole symbol sequence into a self-terminated byte string.

    The symbol count is not stored; the caller transmits it separately.
    """
    if model is None:
        model = AdaptiveModel(nsymbols)
    enc = RangeEncoder()
    enc.encode(symbols, model)
    return enc.finish()


def ac_decode(data: bytes, count: int, model: AdaptiveModel | None = None,
              nsymbols: int = 256) -> np.ndarray:
    if model is None:
        model = AdaptiveModel(nsymbols)
    return RangeDecoder(data).decode(count, model)
