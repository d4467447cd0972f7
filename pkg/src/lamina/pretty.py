"""Source printer and AST dump.

to_source emits concrete syntax that reparses to a structurally equal
tree; operator expressions are fully parenthesized so no precedence
knowledge is needed.  Annotation wrappers (Ignore/Ref/ElemRef) print as
their underlying form, so an annotated tree prints to the same source as
its stripped original.

dump_ast is the -dast format: one constructor per line, two-space
indentation, stable across runs.
"""
from __future__ import annotations

from . import ast

_STR_ESCAPES = {"\n": "\\n", "\t": "\\t", "\\": "\\\\", '"': '\\"'}


def quote_string(s: str) -> str:
    return '"' + "".join(_STR_ESCAPES.get(c, c) for c in s) + '"'


def to_source(node) -> str:
    if isinstance(node, ast.Program):
        return _scope_items(node.body)
    return _expr(node)


def _scope_items(e: ast.Expr) -> str:
    """Render a scope body without the surrounding parentheses."""
    if isinstance(e, ast.Scope):
        defs = " ".join(_definition(d) for d in e.defs)
        return f"{defs} {_scope_items(e.body)}"
    return _expr(e)


def _definition(d: ast.Definition) -> str:
    match d:
        case ast.VarDef(name=name, init=None):
            return f"var {name};"
        case ast.VarDef(name=name, init=init):
            return f"var {name} = {_expr(init)};"
        case ast.ValDef(name=name, init=init):
            return f"val {name} = {_expr(init)};"
        case ast.FunDef(name=name, params=params, body=body):
            return f"fun {name} ({', '.join(params)}) {{ {_scope_items(body)} }}"
    raise TypeError(type(d).__name__)


def _expr(e: ast.Expr) -> str:
    match e:
        case ast.Const(value=v):
            return str(v) if v >= 0 else f"(0 - {-v})"
        case ast.Str(value=s):
            return quote_string(s)
        case ast.Var(name=name) | ast.Ref(name=name):
            return name
        case ast.Ignore(expr=inner):
            return _expr(inner)
        case ast.Binop(op=op, left=l, right=r):
            return f"({_expr(l)} {op} {_expr(r)})"
        case ast.Assign(target=t, value=v):
            return f"({_expr(t)} := {_expr(v)})"
        case ast.Seq(first=a, second=b):
            return f"({_expr(a)}; {_expr(b)})"
        case ast.Skip():
            return "skip"
        case ast.If(cond=c, then=t, otherwise=o):
            return (f"if {_expr(c)} then {_scope_items(t)} "
                    f"else {_scope_items(o)} fi")
        case ast.While(cond=c, body=b):
            return f"while {_expr(c)} do {_scope_items(b)} od"
        case ast.DoWhile(body=b, cond=c):
            return f"do {_scope_items(b)} while {_expr(c)} od"
        case ast.Read(name=name):
            return f"read ({name})"
        case ast.Write(expr=inner):
            return f"write ({_expr(inner)})"
        case ast.Call(callee=f, args=args):
            return f"{_expr(f)} ({', '.join(_expr(a) for a in args)})"
        case ast.Elem(obj=o, index=i) | ast.ElemRef(obj=o, index=i):
            return f"{_expr(o)} [{_expr(i)}]"
        case ast.ArrayLit(elems=elems):
            return f"[{', '.join(_expr(a) for a in elems)}]"
        case ast.Sexp(tag=tag, elems=[]):
            return tag
        case ast.Sexp(tag=tag, elems=elems):
            return f"{tag} ({', '.join(_expr(a) for a in elems)})"
        case ast.Lambda(params=params, body=b):
            return f"fun ({', '.join(params)}) {{ {_scope_items(b)} }}"
        case ast.Scope():
            return f"({_scope_items(e)})"
        case ast.Case(scrutinee=s, branches=brs):
            arms = " | ".join(
                f"{_pattern(b.pattern)} -> {_scope_items(b.body)}"
                for b in brs)
            return f"case {_expr(s)} of {arms} esac"
    raise TypeError(type(e).__name__)


def _pattern(p: ast.Pattern) -> str:
    match p:
        case ast.PWild():
            return "_"
        case ast.PConst(value=v):
            return str(v)
        case ast.PBind(name=name):
            return name
        case ast.PSexp(tag=tag, subs=[]):
            return tag
        case ast.PSexp(tag=tag, subs=subs):
            return f"{tag} ({', '.join(_pattern(s) for s in subs)})"
        case ast.PArray(subs=subs):
            return f"[{', '.join(_pattern(s) for s in subs)}]"
    raise TypeError(type(p).__name__)


# ---------------------------------------------------------------------------
# -dast rendering
# ---------------------------------------------------------------------------

def dump_ast(program: ast.Program) -> str:
    lines = []
    _dump(program.body, 0, lines)
    return "\n".join(lines) + "\n"


def _emit(lines, depth, text):
    lines.append("  " * depth + text)


def _dump(n, depth, lines):
    match n:
        case ast.Const(value=v):
            _emit(lines, depth, f"Const {v}")
        case ast.Str(value=s):
            _emit(lines, depth, f"Str {quote_string(s)}")
        case ast.Var(name=name):
            _emit(lines, depth, f"Var {name}")
        case ast.Ref(name=name):
            _emit(lines, depth, f"Ref {name}")
        case ast.Ignore(expr=e):
            _emit(lines, depth, "Ignore")
            _dump(e, depth + 1, lines)
        case ast.Binop(op=op, left=l, right=r):
            _emit(lines, depth, f"Binop {op}")
            _dump(l, depth + 1, lines)
            _dump(r, depth + 1, lines)
        case ast.Assign(target=t, value=v):
            _emit(lines, depth, "Assign")
            _dump(t, depth + 1, lines)
            _dump(v, depth + 1, lines)
        case ast.Seq(first=a, second=b):
            _emit(lines, depth, "Seq")
            _dump(a, depth + 1, lines)
            _dump(b, depth + 1, lines)
        case ast.Skip():
            _emit(lines, depth, "Skip")
        case ast.If(cond=c, then=t, otherwise=o):
            _emit(lines, depth, "If")
            _dump(c, depth + 1, lines)
            _dump(t, depth + 1, lines)
            _dump(o, depth + 1, lines)
        case ast.While(cond=c, body=b):
            _emit(lines, depth, "While")
            _dump(c, depth + 1, lines)
            _dump(b, depth + 1, lines)
        case ast.DoWhile(body=b, cond=c):
            _emit(lines, depth, "DoWhile")
            _dump(b, depth + 1, lines)
            _dump(c, depth + 1, lines)
        case ast.Read(name=name):
            _emit(lines, depth, f"Read {name}")
        case ast.Write(expr=e):
            _emit(lines, depth, "Write")
            _dump(e, depth + 1, lines)
        case ast.Call(callee=f, args=args):
            _emit(lines, depth, "Call")
            _dump(f, depth + 1, lines)
            for a in args:
                _dump(a, depth + 1, lines)
        case ast.Elem(obj=o, index=i):
            _emit(lines, depth, "Elem")
            _dump(o, depth + 1, lines)
            _dump(i, depth + 1, lines)
        case ast.ElemRef(obj=o, index=i):
            _emit(lines, depth, "ElemRef")
            _dump(o, depth + 1, lines)
            _dump(i, depth + 1, lines)
        case ast.ArrayLit(elems=elems):
            _emit(lines, depth, "Array")
            for a in elems:
                _dump(a, depth + 1, lines)
        case ast.Sexp(tag=tag, elems=elems):
            _emit(lines, depth, f"Sexp {tag}")
            for a in elems:
                _dump(a, depth + 1, lines)
        case ast.Lambda(params=params, body=b):
            _emit(lines, depth, f"Lambda ({', '.join(params)})")
            _dump(b, depth + 1, lines)
        case ast.Scope(defs=defs, body=b):
            _emit(lines, depth, "Scope")
            for d in defs:
                _dump_def(d, depth + 1, lines)
            _dump(b, depth + 1, lines)
        case ast.Case(scrutinee=s, branches=brs):
            _emit(lines, depth, "Case")
            _dump(s, depth + 1, lines)
            for b in brs:
                _emit(lines, depth + 1, f"Branch {_pattern(b.pattern)}")
                _dump(b.body, depth + 2, lines)
        case _:
            raise TypeError(type(n).__name__)


def _dump_def(d, depth, lines):
    match d:
        case ast.VarDef(name=name, init=init):
            _emit(lines, depth, f"VarDef {name}")
            if init is not None:
                _dump(init, depth + 1, lines)
        case ast.ValDef(name=name, init=init):
            _emit(lines, depth, f"ValDef {name}")
            _dump(init, depth + 1, lines)
        case ast.FunDef(name=name, params=params, body=body):
            _emit(lines, depth, f"FunDef {name} ({', '.join(params)})")
            _dump(body, depth + 1, lines)
