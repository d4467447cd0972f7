"""Reference interpreter.

Evaluates the kind-annotated tree directly with an environment chain of
mutable cells.  This is the semantic baseline the stack machine and the
native code are tested against: all three must produce the same output
bytes and the same failure classification on every corpus program.

Scope evaluation creates one cell per definition up front (initialized
to integer 0), installs function closures, then runs variable and value
initializers in textual order.  Functions therefore see their mutually
recursive siblings, and initializers see later bindings as 0, exactly
like the zero-filled frame slots of the compiled modes.
"""
from __future__ import annotations

from . import ast
from .errors import RuntimeFailure
from .values import (VArray, VSexp, VString, World, apply_binop, elem_read,
                     elem_write, format_printf, tag_key, truthy,
                     value_length, wrap63)


class Cell:
    __slots__ = ("value", "mutable")

    def __init__(self, value, mutable: bool):
        self.value = value
        self.mutable = mutable


class Env:
    __slots__ = ("parent", "table")

    def __init__(self, parent=None):
        self.parent = parent
        self.table: dict[str, Cell] = {}

    def lookup(self, name: str) -> Cell | None:
        env = self
        while env is not None:
            cell = env.table.get(name)
            if cell is not None:
                return cell
            env = env.parent
        return None


class VClosure:
    __slots__ = ("name", "params", "body", "env")

    def __init__(self, name, params, body, env):
        self.name = name
        self.params = params
        self.body = body
        self.env = env

    def __repr__(self):
        return f"<closure {self.name}/{len(self.params)}>"


class VBuiltin:
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self):
        return f"<builtin {self.name}>"


BUILTINS = ("printf", "length")


def root_env() -> Env:
    env = Env()
    for name in BUILTINS:
        env.table[name] = Cell(VBuiltin(name), mutable=False)
    return env


class Interp:
    def __init__(self, world: World):
        self.world = world

    def run(self, program: ast.Program):
        self.eval(program.body, root_env())

    def eval(self, e: ast.Node, env: Env):
        while True:
            m = type(e)
            if m is ast.Const:
                return wrap63(e.value)
            if m is ast.Str:
                return VString(bytearray(e.value.encode()))
            if m is ast.Var:
                cell = env.lookup(e.name)
                assert cell is not None, f"unresolved name {e.name}"
                return cell.value
            if m is ast.Ignore:
                self.eval(e.expr, env)
                return None
            if m is ast.Binop:
                a = self.eval(e.left, env)
                b = self.eval(e.right, env)
                return apply_binop(e.op, a, b)
            if m is ast.Assign:
                return self.assign(e, env)
            if m is ast.Seq:
                self.eval(e.first, env)
                e = e.second
                continue
            if m is ast.Skip:
                return None
            if m is ast.If:
                e = e.then if truthy(self.eval(e.cond, env)) else e.otherwise
                continue
            if m is ast.While:
                while truthy(self.eval(e.cond, env)):
                    self.eval(e.body, env)
                return None
            if m is ast.DoWhile:
                while True:
                    self.eval(e.body, env)
                    if not truthy(self.eval(e.cond, env)):
                        return None
            if m is ast.Read:
                v = self.world.read_int()
                self.store(e.name, v, e.loc, env)
                return None
            if m is ast.Write:
                v = self.eval(e.expr, env)
                if not isinstance(v, int):
                    raise RuntimeFailure("write of non-integer value")
                self.world.write_int(v)
                return None
            if m is ast.Call:
                return self.call(e, env)
            if m is ast.Elem:
                v = self.eval(e.obj, env)
                i = self.eval(e.index, env)
                return elem_read(v, i)
            if m is ast.ArrayLit:
                return VArray([self.eval(x, env) for x in e.elems])
            if m is ast.Sexp:
                return VSexp(e.tag, [self.eval(x, env) for x in e.elems])
            if m is ast.Lambda:
                return VClosure("lambda", e.params, e.body, env)
            if m is ast.Scope:
                env = self.enter_scope(e, env)
                e = e.body
                continue
            if m is ast.Case:
                e, env = self.select_branch(e, env)
                continue
            raise AssertionError(f"cannot evaluate {m.__name__}")

    def assign(self, e: ast.Assign, env: Env):
        t = e.target
        # A conditional target is narrowed to a leaf before the value
        # expression runs, matching the compiled evaluation order.
        while True:
            m = type(t)
            if m is ast.Ref:
                v = self.eval(e.value, env)
                self.store(t.name, v, e.loc, env)
                return v
            if m is ast.ElemRef:
                obj = self.eval(t.obj, env)
                idx = self.eval(t.index, env)
                v = self.eval(e.value, env)
                return elem_write(obj, idx, v)
            if m is ast.If:
                t = t.then if truthy(self.eval(t.cond, env)) else t.otherwise
            elif m is ast.Seq:
                self.eval(t.first, env)
                t = t.second
            elif m is ast.Scope:
                env = self.enter_scope(t, env)
                t = t.body
            elif m is ast.Case:
                t, env = self.select_branch(t, env)
            else:
                raise AssertionError(f"cannot assign to {m.__name__}")

    def store(self, name: str, v, loc: ast.Loc, env: Env):
        cell = env.lookup(name)
        assert cell is not None, f"unresolved name {name}"
        if not cell.mutable:
            raise RuntimeFailure(
                f"assignment to immutable binding at {loc.line}:{loc.col}")
        cell.value = v

    def call(self, e: ast.Call, env: Env):
        f = self.eval(e.callee, env)
        args = [self.eval(a, env) for a in e.args]
        if isinstance(f, VBuiltin):
            if f.name == "printf":
                if not args:
                    raise RuntimeFailure("printf: format must be a string")
                self.world.write_bytes(format_printf(args[0], args[1:]))
                return 0
            return value_length(args[0] if args else 0)
        if not isinstance(f, VClosure):
            raise RuntimeFailure("call of non-closure value")
        if len(args) != len(f.params):
            raise RuntimeFailure(
                f"wrong number of arguments: expected {len(f.params)}, "
                f"got {len(args)}")
        frame = Env(f.env)
        for p, a in zip(f.params, args):
            frame.table[p] = Cell(a, mutable=True)
        return self.eval(f.body, frame)

    def enter_scope(self, e: ast.Scope, env: Env) -> Env:
        inner = Env(env)
        for d in e.defs:
            mutable = type(d) is ast.VarDef
            inner.table[d.name] = Cell(0, mutable)
        for d in e.defs:
            if type(d) is ast.FunDef:
                inner.table[d.name].value = VClosure(
                    d.name, d.params, d.body, inner)
        for d in e.defs:
            if type(d) is not ast.FunDef and d.init is not None:
                inner.table[d.name].value = self.eval(d.init, inner)
        return inner

    def select_branch(self, e: ast.Case, env: Env):
        v = self.eval(e.scrutinee, env)
        for branch in e.branches:
            if match_pattern(branch.pattern, v):
                return branch.body, env
        raise RuntimeFailure(
            f"match failure at {e.loc.line}:{e.loc.col}")


def match_pattern(p: ast.Node, v) -> bool:
    m = type(p)
    if m is ast.PWild:
        return True
    if m is ast.PConst:
        return isinstance(v, int) and v == p.value
    if m is ast.PSexp:
        return (isinstance(v, VSexp)
                and tag_key(v.tag) == tag_key(p.tag)
                and len(v.cells) == len(p.subs)
                and all(match_pattern(s, c)
                        for s, c in zip(p.subs, v.cells)))
    if m is ast.PArray:
        return (isinstance(v, VArray)
                and len(v.cells) == len(p.subs)
                and all(match_pattern(s, c)
                        for s, c in zip(p.subs, v.cells)))
    raise AssertionError(f"residual binder pattern {m.__name__}")


def run_program(program: ast.Program, world: World):
    try:
        Interp(world).run(program)
    except RuntimeFailure as err:
        err.partial = world.output()
        raise
