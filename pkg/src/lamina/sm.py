"""Stack machine: instruction set, textual dumps, static checks, executor.

Instructions form one flat list.  Each function is bracketed by BEGIN
and END, the entry function is named "main", and control never falls
from one function into the next (END is terminal).  Operands live on a
single value stack; LD and ST address cells through designators that
name a global, a frame local, an argument slot, or a captured cell.

ST pops the stored value.  Expression-position assignments therefore
duplicate before storing, and statement position simply stores.  FAIL
aborts at run time but is a no-op for the static checker, so failing
paths keep the surrounding depth accounting intact.

The module also hosts the three code-shape invariants the compiler
promises (checked by `check_invariants`):

  A. every instruction of every function is reachable;
  B. the operand-stack depth at each instruction is a single
     well-defined non-negative number on all paths, and END is reached
     at depth 1 (depth 0 for "main");
  C. a single left-to-right pass that carries the current depth
     through unseen labels never gets contradicted by a later jump.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import CodegenInvariantError, RuntimeFailure
from .values import (VArray, VSexp, VString, World, apply_binop, elem_read,
                     elem_write, format_printf, tag_key, truthy,
                     value_length, wrap63)


# -- designators -------------------------------------------------------------

@dataclass(frozen=True)
class Global:
    name: str


@dataclass(frozen=True)
class Local:
    index: int


@dataclass(frozen=True)
class Arg:
    index: int


@dataclass(frozen=True)
class Captured:
    index: int


Designator = Global | Local | Arg | Captured


# -- instructions ------------------------------------------------------------

@dataclass(frozen=True)
class Begin:
    name: str
    nargs: int
    nlocals: int
    captured: tuple[str, ...]


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Label:
    name: str


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class String:
    value: str


@dataclass(frozen=True)
class Ld:
    place: Designator


@dataclass(frozen=True)
class St:
    place: Designator


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class Dup:
    pass


@dataclass(frozen=True)
class Binop:
    op: str


@dataclass(frozen=True)
class Jmp:
    label: str


@dataclass(frozen=True)
class CJmp:
    cond: str  # "z" or "nz"
    label: str


@dataclass(frozen=True)
class Call:
    name: str
    nargs: int


@dataclass(frozen=True)
class CallC:
    nargs: int


@dataclass(frozen=True)
class Closure:
    name: str
    places: tuple[Designator, ...]


@dataclass(frozen=True)
class Read:
    pass


@dataclass(frozen=True)
class Write:
    pass


@dataclass(frozen=True)
class MkSexp:
    tag: str
    arity: int


@dataclass(frozen=True)
class MkArray:
    arity: int


@dataclass(frozen=True)
class Elem:
    pass


@dataclass(frozen=True)
class Sta:
    pass


@dataclass(frozen=True)
class Tag:
    tag: str
    arity: int


@dataclass(frozen=True)
class Patt:
    kind: str  # "=n" or "#array"
    value: int


@dataclass(frozen=True)
class Fail:
    loc: tuple[int, int]
    reason: str  # "match" or "immutable"


Instr = (Begin | End | Label | Const | String | Ld | St | Drop | Dup
         | Binop | Jmp | CJmp | Call | CallC | Closure | Read | Write
         | MkSexp | MkArray | Elem | Sta | Tag | Patt | Fail)

BUILTIN_LABELS = ("Lprintf", "Llength")


def stack_effect(i: Instr) -> int:
    m = type(i)
    if m in (Const, String, Ld, Dup, Read, Closure):
        return 1
    if m in (Drop, St, Write, CJmp, Binop, Elem):
        return -1
    if m is Sta:
        return -2
    if m in (MkSexp, MkArray):
        return 1 - i.arity
    if m is Call:
        return 1 - i.nargs
    if m is CallC:
        return -i.nargs
    return 0


# -- textual form ------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}


def _qs(s: str) -> str:
    return '"' + "".join(_ESCAPES.get(c, c) for c in s) + '"'


def _place(d: Designator) -> str:
    if type(d) is Global:
        return f'(Global {_qs(d.name)})'
    return f"({type(d).__name__} {d.index})"


def instr_text(i: Instr) -> str:
    m = type(i)
    if m is Begin:
        caps = "[" + ", ".join(_qs(c) for c in i.captured) + "]"
        return (f"BEGIN ({_qs(i.name)}, {i.nargs}, {i.nlocals}, "
                f"{caps}, [], [])")
    if m is End:
        return "END"
    if m is Label:
        return f"LABEL ({_qs(i.name)})"
    if m is Const:
        return f"CONST {i.value}"
    if m is String:
        return f"STRING {_qs(i.value)}"
    if m is Ld:
        return f"LD {_place(i.place)}"
    if m is St:
        return f"ST {_place(i.place)}"
    if m is Drop:
        return "DROP"
    if m is Dup:
        return "DUP"
    if m is Binop:
        return f"BINOP {_qs(i.op)}"
    if m is Jmp:
        return f"JMP ({_qs(i.label)})"
    if m is CJmp:
        return f"CJMP ({_qs(i.cond)}, {_qs(i.label)})"
    if m is Call:
        return f"CALL ({_qs(i.name)}, {i.nargs}, false)"
    if m is CallC:
        return f"CALLC ({i.nargs})"
    if m is Closure:
        places = "[" + ", ".join(_place(d) for d in i.places) + "]"
        return f"CLOSURE ({_qs(i.name)}, {places})"
    if m is Read:
        return "READ"
    if m is Write:
        return "WRITE"
    if m is MkSexp:
        return f"SEXP ({_qs(i.tag)}, {i.arity})"
    if m is MkArray:
        return f"ARRAY ({i.arity})"
    if m is Elem:
        return "ELEM"
    if m is Sta:
        return "STA"
    if m is Tag:
        return f"TAG ({_qs(i.tag)}, {i.arity})"
    if m is Patt:
        return f"PATT ({_qs(i.kind)}, {i.value})"
    if m is Fail:
        return f'FAIL (({i.loc[0]}, {i.loc[1]}), {_qs(i.reason)})'
    raise AssertionError(f"no text form for {m.__name__}")


def to_text(instrs: list[Instr]) -> str:
    lines = []
    for i in instrs:
        pad = "" if type(i) in (Begin, End) else "  "
        lines.append(pad + instr_text(i))
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r'''
    (?P<ws>\s+)
  | (?P<str>"(?:\\.|[^"\\])*")
  | (?P<int>-?\d+)
  | (?P<id>[A-Za-z=#][A-Za-z0-9_=#]*)
  | (?P<punct>[()\[\],])
''', re.VERBOSE)


def _lex_line(line: str):
    out = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise ValueError(f"bad dump syntax: {line!r}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    return out


def _unq(tok: str) -> str:
    body = tok[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            out.append(_UNESCAPES[body[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


class _LineParser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def eat(self, text):
        kind, tok = self.next()
        if tok != text:
            raise ValueError(f"expected {text!r}, found {tok!r}")

    def string(self):
        kind, tok = self.next()
        if kind != "str":
            raise ValueError(f"expected string, found {tok!r}")
        return _unq(tok)

    def int_(self):
        kind, tok = self.next()
        if kind != "int":
            raise ValueError(f"expected integer, found {tok!r}")
        return int(tok)

    def place(self):
        self.eat("(")
        kind, tok = self.next()
        if tok == "Global":
            d = Global(self.string())
        elif tok in ("Local", "Arg", "Captured"):
            d = {"Local": Local, "Arg": Arg, "Captured": Captured}[tok](
                self.int_())
        else:
            raise ValueError(f"unknown designator {tok!r}")
        self.eat(")")
        return d

    def string_list(self):
        self.eat("[")
        out = []
        while self.toks[self.pos][1] != "]":
            if out:
                self.eat(",")
            out.append(self.string())
        self.eat("]")
        return tuple(out)

    def place_list(self):
        self.eat("[")
        out = []
        while self.toks[self.pos][1] != "]":
            if out:
                self.eat(",")
            out.append(self.place())
        self.eat("]")
        return tuple(out)


def parse_text(text: str) -> list[Instr]:
    instrs = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        toks = _lex_line(line)
        p = _LineParser(toks)
        _, op = p.next()
        if op == "BEGIN":
            p.eat("(")
            name = p.string()
            p.eat(",")
            nargs = p.int_()
            p.eat(",")
            nlocals = p.int_()
            p.eat(",")
            caps = p.string_list()
            p.eat(",")
            p.string_list()
            p.eat(",")
            p.string_list()
            p.eat(")")
            instrs.append(Begin(name, nargs, nlocals, caps))
        elif op == "END":
            instrs.append(End())
        elif op == "LABEL":
            p.eat("(")
            instrs.append(Label(p.string()))
            p.eat(")")
        elif op == "CONST":
            instrs.append(Const(p.int_()))
        elif op == "STRING":
            instrs.append(String(p.string()))
        elif op == "LD":
            instrs.append(Ld(p.place()))
        elif op == "ST":
            instrs.append(St(p.place()))
        elif op == "DROP":
            instrs.append(Drop())
        elif op == "DUP":
            instrs.append(Dup())
        elif op == "BINOP":
            instrs.append(Binop(p.string()))
        elif op == "JMP":
            p.eat("(")
            instrs.append(Jmp(p.string()))
            p.eat(")")
        elif op == "CJMP":
            p.eat("(")
            cond = p.string()
            p.eat(",")
            instrs.append(CJmp(cond, p.string()))
            p.eat(")")
        elif op == "CALL":
            p.eat("(")
            name = p.string()
            p.eat(",")
            nargs = p.int_()
            p.eat(",")
            p.next()
            p.eat(")")
            instrs.append(Call(name, nargs))
        elif op == "CALLC":
            p.eat("(")
            instrs.append(CallC(p.int_()))
            p.eat(")")
        elif op == "CLOSURE":
            p.eat("(")
            name = p.string()
            p.eat(",")
            instrs.append(Closure(name, p.place_list()))
            p.eat(")")
        elif op == "READ":
            instrs.append(Read())
        elif op == "WRITE":
            instrs.append(Write())
        elif op == "SEXP":
            p.eat("(")
            tag = p.string()
            p.eat(",")
            instrs.append(MkSexp(tag, p.int_()))
            p.eat(")")
        elif op == "ARRAY":
            p.eat("(")
            instrs.append(MkArray(p.int_()))
            p.eat(")")
        elif op == "ELEM":
            instrs.append(Elem())
        elif op == "STA":
            instrs.append(Sta())
        elif op == "TAG":
            p.eat("(")
            tag = p.string()
            p.eat(",")
            instrs.append(Tag(tag, p.int_()))
            p.eat(")")
        elif op == "PATT":
            p.eat("(")
            kind = p.string()
            p.eat(",")
            instrs.append(Patt(kind, p.int_()))
            p.eat(")")
        elif op == "FAIL":
            p.eat("(")
            p.eat("(")
            line_ = p.int_()
            p.eat(",")
            col = p.int_()
            p.eat(")")
            p.eat(",")
            reason = p.string()
            p.eat(")")
            instrs.append(Fail((line_, col), reason))
        else:
            raise ValueError(f"unknown opcode {op!r}")
        if p.pos != len(toks):
            raise ValueError(f"trailing tokens in {line!r}")
    return instrs


# -- static checks -----------------------------------------------------------

def split_functions(instrs: list[Instr]) -> list[tuple[int, int]]:
    """(start, end) index pairs, BEGIN inclusive to END inclusive."""
    spans = []
    start = None
    for idx, i in enumerate(instrs):
        if type(i) is Begin:
            if start is not None:
                raise CodegenInvariantError("BEGIN inside function body")
            start = idx
        elif type(i) is End:
            if start is None:
                raise CodegenInvariantError("END outside function body")
            spans.append((start, idx))
            start = None
        elif start is None:
            raise CodegenInvariantError(
                f"instruction outside any function: {instr_text(i)}")
    if start is not None:
        raise CodegenInvariantError("unterminated function body")
    return spans


def check_invariants(instrs: list[Instr]):
    for start, end in split_functions(instrs):
        _check_function(instrs, start, end)
        _check_one_pass(instrs, start, end)


def _check_function(instrs, start, end):
    head = instrs[start]
    final = 0 if head.name == "main" else 1
    labels = {}
    for idx in range(start, end + 1):
        i = instrs[idx]
        if type(i) is Label:
            labels[i.name] = idx
    depths = {start: 0}
    work = [start]
    while work:
        idx = work.pop()
        i = instrs[idx]
        here = depths[idx]
        if type(i) is End:
            if here != final:
                raise CodegenInvariantError(
                    f"invariant B: {head.name} ends at depth {here}, "
                    f"expected {final}")
            continue
        after = here + stack_effect(i)
        if after < 0:
            raise CodegenInvariantError(
                f"invariant B: stack underflow at {instr_text(i)} "
                f"in {head.name}")
        succs = []
        if type(i) is Jmp:
            succs.append(("jump", i.label))
        elif type(i) is CJmp:
            succs.append(("jump", i.label))
            succs.append(("fall", idx + 1))
        else:
            succs.append(("fall", idx + 1))
        for how, where in succs:
            if how == "jump":
                if where not in labels:
                    raise CodegenInvariantError(
                        f"jump out of {head.name} to {where}")
                nxt = labels[where]
            else:
                nxt = where
                if nxt > end:
                    raise CodegenInvariantError(
                        f"{head.name} falls off its END")
            seen = depths.get(nxt)
            if seen is None:
                depths[nxt] = after
                work.append(nxt)
            elif seen != after:
                raise CodegenInvariantError(
                    f"invariant B: depth {after} vs {seen} at "
                    f"{instr_text(instrs[nxt])} in {head.name}")
    for idx in range(start, end + 1):
        if idx not in depths:
            raise CodegenInvariantError(
                f"invariant A: unreachable {instr_text(instrs[idx])} "
                f"in {head.name}")


def _check_one_pass(instrs, start, end):
    """A left-to-right scan must never be contradicted by a later jump."""
    head = instrs[start]
    cur = 0
    recorded = {}
    for idx in range(start + 1, end + 1):
        i = instrs[idx]
        m = type(i)
        if m is Label:
            if i.name in recorded:
                cur = recorded[i.name]
            else:
                recorded[i.name] = cur
            continue
        if m in (Jmp, CJmp):
            target = cur - 1 if m is CJmp else cur
            if i.label in recorded:
                if recorded[i.label] != target:
                    raise CodegenInvariantError(
                        f"invariant C: jump to {i.label} at depth {target} "
                        f"but label scanned at depth {recorded[i.label]} "
                        f"in {head.name}")
            else:
                recorded[i.label] = target
            cur = target if m is CJmp else cur
            continue
        cur += stack_effect(i)


# -- execution ---------------------------------------------------------------

class SMClosure:
    __slots__ = ("name", "cells")

    def __init__(self, name: str, cells: list):
        self.name = name
        self.cells = cells

    def __repr__(self):
        return f"<sm closure {self.name}/{len(self.cells)}>"


class _Frame:
    __slots__ = ("args", "locals", "captured")

    def __init__(self, args, nlocals, captured):
        self.args = args
        self.locals = [0] * nlocals
        self.captured = captured


class Machine:
    """Executes a checked instruction list against a World."""

    def __init__(self, instrs: list[Instr], world: World,
                 global_names=()):
        self.instrs = instrs
        self.world = world
        self.globals = {name: 0 for name in global_names}
        self.targets = {}
        for idx, i in enumerate(instrs):
            if type(i) is Label:
                self.targets[i.name] = idx
            elif type(i) is Begin:
                self.targets[i.name] = idx
        self.jmp_count = 0
        self.cjmp_count = 0
        self.steps = 0

    def run(self):
        instrs = self.instrs
        stack = []
        calls = []
        frame = None
        pending = []
        pc = self.targets["main"]
        while True:
            i = instrs[pc]
            pc += 1
            self.steps += 1
            m = type(i)
            if m is Const:
                stack.append(i.value)
            elif m is Ld:
                stack.append(self._load(frame, i.place))
            elif m is St:
                self._store(frame, i.place, stack.pop())
            elif m is Binop:
                b = stack.pop()
                a = stack.pop()
                stack.append(apply_binop(i.op, a, b))
            elif m is Jmp:
                self.jmp_count += 1
                pc = self.targets[i.label]
            elif m is CJmp:
                self.cjmp_count += 1
                v = stack.pop()
                taken = truthy(v) if i.cond == "nz" else not truthy(v)
                if taken:
                    pc = self.targets[i.label]
            elif m is Dup:
                stack.append(stack[-1])
            elif m is Drop:
                stack.pop()
            elif m is String:
                stack.append(VString(bytearray(i.value.encode())))
            elif m is Read:
                stack.append(self.world.read_int())
            elif m is Write:
                v = stack.pop()
                if not isinstance(v, int):
                    raise RuntimeFailure("write of non-integer value")
                self.world.write_int(v)
            elif m is Call:
                if i.name in BUILTIN_LABELS:
                    self._builtin(i, stack)
                else:
                    self._check_arity(i.name, i.nargs)
                    calls.append((pc, frame))
                    pending = []
                    pc = self.targets[i.name]
            elif m is CallC:
                args_at = len(stack) - i.nargs
                clo = stack[args_at - 1]
                if not isinstance(clo, SMClosure):
                    raise RuntimeFailure("call of non-closure value")
                self._check_arity(clo.name, i.nargs)
                del stack[args_at - 1]
                calls.append((pc, frame))
                pending = clo.cells
                pc = self.targets[clo.name]
            elif m is Begin:
                args = stack[len(stack) - i.nargs:]
                del stack[len(stack) - i.nargs:]
                frame = _Frame(args, i.nlocals, pending)
                pending = []
            elif m is End:
                if not calls:
                    return
                ret = stack.pop()
                pc, frame = calls.pop()
                stack.append(ret)
            elif m is Closure:
                cells = [self._load(frame, d) for d in i.places]
                stack.append(SMClosure(i.name, cells))
            elif m is MkSexp:
                cells = stack[len(stack) - i.arity:]
                del stack[len(stack) - i.arity:]
                stack.append(VSexp(i.tag, cells))
            elif m is MkArray:
                cells = stack[len(stack) - i.arity:]
                del stack[len(stack) - i.arity:]
                stack.append(VArray(cells))
            elif m is Elem:
                idx = stack.pop()
                v = stack.pop()
                stack.append(elem_read(v, idx))
            elif m is Sta:
                x = stack.pop()
                idx = stack.pop()
                v = stack.pop()
                stack.append(elem_write(v, idx, x))
            elif m is Tag:
                v = stack.pop()
                ok = (isinstance(v, VSexp)
                      and tag_key(v.tag) == tag_key(i.tag)
                      and len(v.cells) == i.arity)
                stack.append(1 if ok else 0)
            elif m is Patt:
                v = stack.pop()
                if i.kind == "=n":
                    ok = isinstance(v, int) and v == i.value
                else:
                    ok = isinstance(v, VArray) and len(v.cells) == i.value
                stack.append(1 if ok else 0)
            elif m is Fail:
                line, col = i.loc
                if i.reason == "match":
                    raise RuntimeFailure(f"match failure at {line}:{col}")
                raise RuntimeFailure(
                    f"assignment to immutable binding at {line}:{col}")
            elif m is Label:
                pass
            else:
                raise AssertionError(f"cannot execute {m.__name__}")

    def _check_arity(self, name: str, got: int):
        expected = self.instrs[self.targets[name]].nargs
        if expected != got:
            raise RuntimeFailure(
                f"wrong number of arguments: expected {expected}, "
                f"got {got}")

    def _builtin(self, i: Call, stack):
        args = stack[len(stack) - i.nargs:]
        del stack[len(stack) - i.nargs:]
        if i.name == "Lprintf":
            self.world.write_bytes(format_printf(args[0], args[1:]))
            stack.append(0)
        else:
            stack.append(value_length(args[0]))

    def _load(self, frame, d: Designator):
        m = type(d)
        if m is Global:
            return self.globals[d.name]
        if m is Local:
            return frame.locals[d.index]
        if m is Arg:
            return frame.args[d.index]
        return frame.captured[d.index]

    def _store(self, frame, d: Designator, v):
        m = type(d)
        if m is Global:
            self.globals[d.name] = v
        elif m is Local:
            frame.locals[d.index] = v
        elif m is Arg:
            frame.args[d.index] = v
        else:
            frame.captured[d.index] = v
