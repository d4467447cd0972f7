"""Runtime values and the dynamic semantics shared by the two Python modes.

Integers are 63-bit two's complement: every arithmetic result wraps into
[-2^62, 2^62 - 1].  The native lane realizes the same range for free by
doing arithmetic on 2v+1 encodings in 64-bit registers, so all three
modes agree on overflow behaviour, truncated division and remainder sign.

Boxed values (strings, arrays, constructors) compare by reference under
== and are not ordered; logical operators treat any boxed value as true.
Failure messages here are byte-identical to the ones the C runtime
prints, which keeps diagnostics aligned across modes.
"""
from __future__ import annotations

from .errors import RuntimeFailure

INT_MIN = -(2 ** 62)
INT_MAX = 2 ** 62 - 1


def wrap63(v: int) -> int:
    return ((v + 2 ** 62) % 2 ** 63) - 2 ** 62


def trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


class VString:
    __slots__ = ("data",)

    def __init__(self, data: bytearray):
        self.data = data

    def __repr__(self):
        return f"VString({bytes(self.data)!r})"


class VArray:
    __slots__ = ("cells",)

    def __init__(self, cells: list):
        self.cells = cells

    def __repr__(self):
        return f"VArray({self.cells!r})"


class VSexp:
    __slots__ = ("tag", "cells")

    def __init__(self, tag: str, cells: list):
        self.tag = tag
        self.cells = cells

    def __repr__(self):
        return f"VSexp({self.tag!r}, {self.cells!r})"


def tag_key(tag: str) -> str:
    # Constructor identity is the first five characters, same as the
    # packed tag word in the native object layout.
    return tag[:5]


def truthy(v) -> bool:
    return v != 0 if isinstance(v, int) else True


def apply_binop(op: str, a, b):
    if op in ("+", "-", "*", "/", "%"):
        if not (isinstance(a, int) and isinstance(b, int)):
            raise RuntimeFailure("arithmetic on non-integer values")
        if op == "+":
            return wrap63(a + b)
        if op == "-":
            return wrap63(a - b)
        if op == "*":
            return wrap63(a * b)
        if b == 0:
            raise RuntimeFailure("division by zero")
        q = trunc_div(a, b)
        if op == "/":
            return wrap63(q)
        return wrap63(a - q * b)
    if op == "==":
        return _eq(a, b)
    if op == "!=":
        return 1 - _eq(a, b)
    if op in ("<", "<=", ">", ">="):
        if not (isinstance(a, int) and isinstance(b, int)):
            raise RuntimeFailure("comparison of non-integer values")
        return 1 if {"<": a < b, "<=": a <= b,
                     ">": a > b, ">=": a >= b}[op] else 0
    if op == "&&":
        return 1 if truthy(a) and truthy(b) else 0
    if op == "!!":
        return 1 if truthy(a) or truthy(b) else 0
    raise RuntimeFailure(f"unknown operator {op}")


def _eq(a, b) -> int:
    if isinstance(a, int) and isinstance(b, int):
        return 1 if a == b else 0
    return 1 if a is b else 0


def elem_read(v, i):
    if isinstance(v, int):
        raise RuntimeFailure("non-boxed argument")
    if not isinstance(i, int):
        raise RuntimeFailure("non-integer index")
    if isinstance(v, VString):
        if not 0 <= i < len(v.data):
            raise RuntimeFailure(
                f"index out of bounds: {i} (length {len(v.data)})")
        return v.data[i]
    if isinstance(v, (VArray, VSexp)):
        cells = v.cells
        if not 0 <= i < len(cells):
            raise RuntimeFailure(
                f"index out of bounds: {i} (length {len(cells)})")
        return cells[i]
    raise RuntimeFailure("non-boxed argument")


def elem_write(v, i, x):
    if isinstance(v, int):
        raise RuntimeFailure("non-boxed argument")
    if not isinstance(i, int):
        raise RuntimeFailure("non-integer index")
    if isinstance(v, VString):
        if not 0 <= i < len(v.data):
            raise RuntimeFailure(
                f"index out of bounds: {i} (length {len(v.data)})")
        if not isinstance(x, int):
            raise RuntimeFailure("string element must be an integer")
        v.data[i] = x & 0xFF
        return x
    if isinstance(v, (VArray, VSexp)):
        cells = v.cells
        if not 0 <= i < len(cells):
            raise RuntimeFailure(
                f"index out of bounds: {i} (length {len(cells)})")
        cells[i] = x
        return x
    raise RuntimeFailure("non-boxed argument")


def value_length(v) -> int:
    if isinstance(v, VString):
        return len(v.data)
    if isinstance(v, (VArray, VSexp)):
        return len(v.cells)
    raise RuntimeFailure("non-boxed argument")


def format_printf(fmt, args) -> bytes:
    if not isinstance(fmt, VString):
        raise RuntimeFailure("printf: format must be a string")
    out = bytearray()
    data = fmt.data
    argi = 0
    i = 0
    while i < len(data):
        c = data[i]
        if c != ord("%"):
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(data):
            raise RuntimeFailure("printf: unknown directive")
        d = chr(data[i + 1])
        i += 2
        if d == "%":
            out.append(ord("%"))
            continue
        if argi >= len(args):
            raise RuntimeFailure("printf: not enough arguments")
        arg = args[argi]
        argi += 1
        if d == "d":
            if not isinstance(arg, int):
                raise RuntimeFailure("printf: %d applied to non-integer")
            out.extend(str(arg).encode())
        elif d == "s":
            if not isinstance(arg, VString):
                raise RuntimeFailure("printf: %s applied to non-string")
            out.extend(arg.data)
        elif d == "c":
            if not isinstance(arg, int):
                raise RuntimeFailure("printf: %c applied to non-integer")
            out.append(arg & 0xFF)
        else:
            raise RuntimeFailure("printf: unknown directive")
    return bytes(out)


class World:
    """Input token stream plus accumulated output bytes."""

    def __init__(self, input_tokens):
        self.tokens = list(input_tokens)
        self.cursor = 0
        self.chunks: list[bytes] = []

    @classmethod
    def from_bytes(cls, data: bytes):
        return cls(data.split())

    def read_int(self) -> int:
        if self.cursor >= len(self.tokens):
            raise RuntimeFailure("read past end of input")
        tok = self.tokens[self.cursor]
        self.cursor += 1
        try:
            v = int(tok)
        except ValueError:
            raise RuntimeFailure("read past end of input") from None
        return wrap63(v)

    def write_int(self, v: int):
        self.chunks.append(f"{v}\n".encode())

    def write_bytes(self, data: bytes):
        self.chunks.append(data)

    def output(self) -> bytes:
        return b"".join(self.chunks)
