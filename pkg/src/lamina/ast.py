"""AST node definitions and the kind (well-formedness) pass.

Every expression is used at one of three kinds:

    REF   the expression denotes an assignable location
    VAL   the expression produces a value
    VOID  the expression is evaluated for effect only

The annotation pass walks the raw parser output top-down, starting at VOID
for the program body, and rewrites the tree so that the kind demands are
explicit: a value expression in VOID position is wrapped in Ignore, and a
variable in REF position becomes a Ref node.  Indexing in REF position
becomes ElemRef.  Expressions that cannot inhabit the demanded kind (skip
as a value, a loop as an assignment target) raise WellFormednessError.

Invariants after annotate_kinds:
  * Ignore / Ref / ElemRef appear only where the pass inserted them;
  * stripping those wrappers and re-annotating reproduces the same tree.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .errors import WellFormednessError


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


NOWHERE = Loc(0, 0)


class Kind(Enum):
    REF = "Ref"
    VAL = "Val"
    VOID = "Void"


# ---------------------------------------------------------------------------
# Nodes.  `loc` is deliberately excluded from equality: two trees are equal
# when they have the same shape, wherever they were parsed from.
# ---------------------------------------------------------------------------

@dataclass
class Node:
    loc: Loc = field(compare=False)


@dataclass
class Expr(Node):
    pass


@dataclass
class Const(Expr):
    value: int


@dataclass
class Str(Expr):
    value: str


@dataclass
class Var(Expr):
    name: str


@dataclass
class Ref(Expr):
    """A variable used as an assignment target (inserted by annotation)."""
    name: str


@dataclass
class Ignore(Expr):
    """A value expression in VOID position (inserted by annotation)."""
    expr: Expr


@dataclass
class Binop(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass
class Assign(Expr):
    target: Expr
    value: Expr


@dataclass
class Seq(Expr):
    first: Expr
    second: Expr


@dataclass
class Skip(Expr):
    pass


@dataclass
class If(Expr):
    cond: Expr
    then: Expr
    otherwise: Expr


@dataclass
class While(Expr):
    cond: Expr
    body: Expr


@dataclass
class DoWhile(Expr):
    body: Expr
    cond: Expr


@dataclass
class Read(Expr):
    name: str


@dataclass
class Write(Expr):
    expr: Expr


@dataclass
class Call(Expr):
    callee: Expr
    args: list[Expr]


@dataclass
class Elem(Expr):
    obj: Expr
    index: Expr


@dataclass
class ElemRef(Expr):
    """Indexing used as an assignment target (inserted by annotation)."""
    obj: Expr
    index: Expr


@dataclass
class ArrayLit(Expr):
    elems: list[Expr]


@dataclass
class Sexp(Expr):
    tag: str
    elems: list[Expr]


@dataclass
class Lambda(Expr):
    params: list[str]
    body: Expr


@dataclass
class Definition(Node):
    pass


@dataclass
class VarDef(Definition):
    name: str
    init: Optional[Expr]


@dataclass
class ValDef(Definition):
    name: str
    init: Expr


@dataclass
class FunDef(Definition):
    name: str
    params: list[str]
    body: Expr


@dataclass
class Scope(Expr):
    defs: list[Definition]
    body: Expr


@dataclass
class Pattern(Node):
    pass


@dataclass
class PWild(Pattern):
    pass


@dataclass
class PConst(Pattern):
    value: int


@dataclass
class PBind(Pattern):
    name: str


@dataclass
class PSexp(Pattern):
    tag: str
    subs: list[Pattern]


@dataclass
class PArray(Pattern):
    subs: list[Pattern]


@dataclass
class CaseBranch(Node):
    pattern: Pattern
    body: Expr


@dataclass
class Case(Expr):
    scrutinee: Expr
    branches: list[CaseBranch]


@dataclass
class Program:
    body: Expr


# The 13 binary operators, grouped the way the compiler lowers them.
ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&&", "!!")
ALL_OPS = ARITH_OPS + CMP_OPS + LOGIC_OPS


# ---------------------------------------------------------------------------
# Kind annotation
# ---------------------------------------------------------------------------

def annotate_kinds(program: Program) -> Program:
    """Return a new Program with Ignore/Ref/ElemRef wrappers made explicit.

    The input must be raw parser output (no wrappers present yet).
    """
    return Program(_ann(program.body, Kind.VOID))


def _fail(e: Expr, kind: Kind, what: str):
    demand = {Kind.REF: "an assignment target",
              Kind.VAL: "a value",
              Kind.VOID: "a statement"}[kind]
    raise WellFormednessError(f"{what} cannot be used as {demand}", e.loc)


def _ann(e: Expr, k: Kind) -> Expr:
    match e:
        case Ref() | Ignore() | ElemRef():
            raise WellFormednessError("tree is already annotated", e.loc)

        case Var(loc=loc, name=name):
            if k is Kind.REF:
                return Ref(loc, name)
            if k is Kind.VOID:
                return Ignore(loc, e)
            return e

        case Const() | Str():
            if k is Kind.REF:
                _fail(e, k, "a constant")
            if k is Kind.VOID:
                return Ignore(e.loc, e)
            return e

        case Elem(loc=loc, obj=obj, index=index):
            obj = _ann(obj, Kind.VAL)
            index = _ann(index, Kind.VAL)
            if k is Kind.REF:
                return ElemRef(loc, obj, index)
            node = Elem(loc, obj, index)
            return Ignore(loc, node) if k is Kind.VOID else node

        case Binop(loc=loc, op=op, left=left, right=right):
            node = Binop(loc, op, _ann(left, Kind.VAL), _ann(right, Kind.VAL))
            if k is Kind.REF:
                _fail(e, k, "an operator expression")
            return Ignore(loc, node) if k is Kind.VOID else node

        case Assign(loc=loc, target=target, value=value):
            node = Assign(loc, _ann(target, Kind.REF), _ann(value, Kind.VAL))
            if k is Kind.REF:
                _fail(e, k, "an assignment")
            return Ignore(loc, node) if k is Kind.VOID else node

        case Seq(loc=loc, first=first, second=second):
            return Seq(loc, _ann(first, Kind.VOID), _ann(second, k))

        case Skip():
            if k is not Kind.VOID:
                _fail(e, k, "skip")
            return e

        case If(loc=loc, cond=cond, then=then, otherwise=otherwise):
            return If(loc, _ann(cond, Kind.VAL), _ann(then, k),
                      _ann(otherwise, k))

        case While(loc=loc, cond=cond, body=body):
            if k is not Kind.VOID:
                _fail(e, k, "a while loop")
            return While(loc, _ann(cond, Kind.VAL), _ann(body, Kind.VOID))

        case DoWhile(loc=loc, body=body, cond=cond):
            if k is not Kind.VOID:
                _fail(e, k, "a do-while loop")
            return DoWhile(loc, _ann(body, Kind.VOID), _ann(cond, Kind.VAL))

        case Read():
            if k is not Kind.VOID:
                _fail(e, k, "read")
            return e

        case Write(loc=loc, expr=expr):
            if k is not Kind.VOID:
                _fail(e, k, "write")
            return Write(loc, _ann(expr, Kind.VAL))

        case Call(loc=loc, callee=callee, args=args):
            node = Call(loc, _ann(callee, Kind.VAL),
                        [_ann(a, Kind.VAL) for a in args])
            if k is Kind.REF:
                _fail(e, k, "a call")
            return Ignore(loc, node) if k is Kind.VOID else node

        case ArrayLit(loc=loc, elems=elems):
            node = ArrayLit(loc, [_ann(a, Kind.VAL) for a in elems])
            if k is Kind.REF:
                _fail(e, k, "an array literal")
            return Ignore(loc, node) if k is Kind.VOID else node

        case Sexp(loc=loc, tag=tag, elems=elems):
            node = Sexp(loc, tag, [_ann(a, Kind.VAL) for a in elems])
            if k is Kind.REF:
                _fail(e, k, "a constructor")
            return Ignore(loc, node) if k is Kind.VOID else node

        case Lambda(loc=loc, params=params, body=body):
            node = Lambda(loc, params, _ann(body, Kind.VAL))
            if k is Kind.REF:
                _fail(e, k, "a function literal")
            return Ignore(loc, node) if k is Kind.VOID else node

        case Scope(loc=loc, defs=defs, body=body):
            return Scope(loc, [_ann_def(d) for d in defs], _ann(body, k))

        case Case(loc=loc, scrutinee=scrutinee, branches=branches):
            return Case(loc, _ann(scrutinee, Kind.VAL),
                        [CaseBranch(b.loc, b.pattern, _ann(b.body, k))
                         for b in branches])

    raise WellFormednessError(f"unknown node {type(e).__name__}", e.loc)


def _ann_def(d: Definition) -> Definition:
    match d:
        case VarDef(loc=loc, name=name, init=init):
            return VarDef(loc, name,
                          None if init is None else _ann(init, Kind.VAL))
        case ValDef(loc=loc, name=name, init=init):
            return ValDef(loc, name, _ann(init, Kind.VAL))
        case FunDef(loc=loc, name=name, params=params, body=body):
            # A function returns the value of its body.
            return FunDef(loc, name, params, _ann(body, Kind.VAL))
    raise WellFormednessError(f"unknown definition {type(d).__name__}", d.loc)


def strip_annotations(program: Program) -> Program:
    """Remove Ignore/Ref/ElemRef wrappers, recovering raw parser shape."""
    return Program(_strip(program.body))


def _strip(e: Expr) -> Expr:
    match e:
        case Ignore(expr=inner):
            return _strip(inner)
        case Ref(loc=loc, name=name):
            return Var(loc, name)
        case ElemRef(loc=loc, obj=obj, index=index):
            return Elem(loc, _strip(obj), _strip(index))
    return _map_children(e, _strip)


def _map_children(e, f):
    updates = {}
    for fld in dataclasses.fields(e):
        v = getattr(e, fld.name)
        if isinstance(v, Expr):
            updates[fld.name] = f(v)
        elif isinstance(v, list) and v and isinstance(v[0], (Expr, Definition,
                                                             CaseBranch)):
            updates[fld.name] = [_map_item(item, f) for item in v]
    return dataclasses.replace(e, **updates) if updates else e


def _map_item(item, f):
    if isinstance(item, Expr):
        return f(item)
    if isinstance(item, CaseBranch):
        return CaseBranch(item.loc, item.pattern, f(item.body))
    if isinstance(item, VarDef):
        return VarDef(item.loc, item.name,
                      None if item.init is None else f(item.init))
    if isinstance(item, ValDef):
        return ValDef(item.loc, item.name, f(item.init))
    if isinstance(item, FunDef):
        return FunDef(item.loc, item.name, item.params, f(item.body))
    return item


def iter_exprs(root):
    """Yield every Expr in the tree, including those inside definitions."""
    stack = [root]
    while stack:
        n = stack.pop()
        if isinstance(n, Program):
            stack.append(n.body)
            continue
        if isinstance(n, Expr):
            yield n
        for fld in dataclasses.fields(n):
            v = getattr(n, fld.name)
            if isinstance(v, (Expr, Definition, CaseBranch)):
                stack.append(v)
            elif isinstance(v, list):
                for item in v:
                    if isinstance(item, (Expr, Definition, CaseBranch)):
                        stack.append(item)


def node_count(program: Program) -> int:
    """Number of Expr nodes in the tree (the do-while linearity metric)."""
    return sum(1 for _ in iter_exprs(program))
