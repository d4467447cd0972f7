"""Translation from the kind-annotated tree to stack machine code.

The pipeline has four phases.  Resolution walks the tree once, gives
every binder a program-unique name, classifies it (global, local,
argument, function, builtin), and rejects unbound names and misused
builtins.  Capture analysis computes, for each function, the set of
enclosing cells its body needs, propagating through nested closures to
a fixpoint.  Every local or argument that appears in some capture set
is then marked boxed: its slot holds a one-element array and all reads
and writes go through that cell, so a closure and its defining frame
observe each other's updates just as the tree-walking interpreter does.
Emission finally produces one flat instruction list, entry function
first.

Calls to a known capture-free function compile to direct CALL; every
other application builds or loads a closure value and goes through
CALLC.  Assignments into immutable bindings compile to the evaluated
right-hand side followed by FAIL, so the error stays a run-time one and
all modes classify it identically.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import ast, sm
from .ast import Kind
from .errors import CompileError
from .values import wrap63

BUILTIN_LABELS = {"printf": "Lprintf", "length": "Llength"}

_RESERVED_ALPHA = re.compile(r"printf|length|lambda_\d+")


class Binding:
    __slots__ = ("orig", "alpha", "kind", "owner", "fn", "boxed", "slot")

    def __init__(self, orig, alpha, kind, owner, fn=None):
        self.orig = orig
        self.alpha = alpha
        self.kind = kind  # "var" | "val" | "arg" | "fun" | "builtin"
        self.owner = owner  # FunCtx, or None for globals and builtins
        self.fn = fn
        self.boxed = False
        self.slot = -1

    @property
    def mutable(self):
        return self.kind in ("var", "arg")

    def __repr__(self):
        return f"<{self.kind} {self.alpha}>"


class FunCtx:
    def __init__(self, label, orig, parent):
        self.label = label
        self.orig = orig
        self.parent = parent
        self.params: list[Binding] = []
        self.locals: list[Binding] = []
        self.body = None
        self.children: list[FunCtx] = []
        self.refs: set[Binding] = set()
        self.fnrefs: set[FunCtx] = set()
        self.captures: list[Binding] = []
        self.cap_index: dict[Binding, int] = {}

    def __repr__(self):
        return f"<fun {self.label}>"


class _Resolver:
    def __init__(self):
        self.alpha_used = set()
        self.use = {}      # id(Var|Ref|Read|Call node) -> Binding
        self.defbind = {}  # id(def node) -> Binding
        self.fn_of = {}    # id(FunDef|Lambda node) -> FunCtx
        self.funs: list[FunCtx] = []
        self.globals: list[Binding] = []
        self.lambda_count = 0
        self.builtins = {name: Binding(name, name, "builtin", None)
                         for name in BUILTIN_LABELS}

    def fresh_alpha(self, orig: str) -> str:
        cand = orig
        n = 0
        while cand in self.alpha_used or _RESERVED_ALPHA.fullmatch(cand):
            n += 1
            cand = f"{orig}_{n}"
        self.alpha_used.add(cand)
        return cand

    def run(self, program: ast.Program) -> FunCtx:
        main = FunCtx("main", "main", None)
        self.funs.append(main)
        main.body = program.body
        self.expr(program.body, [], main, top=True)
        return main

    def lookup(self, name, env):
        for frame in reversed(env):
            if name in frame:
                return frame[name]
        return self.builtins.get(name)

    def resolve_name(self, node, name, env, f, assigned=False):
        b = self.lookup(name, env)
        if b is None:
            raise CompileError(f"unbound name {name!r}", node.loc)
        if b.kind == "builtin":
            if assigned:
                raise CompileError(
                    f"cannot assign to builtin {name!r}", node.loc)
            raise CompileError(
                f"builtin {name!r} can only be called", node.loc)
        self.use[id(node)] = b
        f.refs.add(b)
        if b.kind == "fun":
            f.fnrefs.add(b.fn)
        return b

    def expr(self, e, env, f, top=False):
        m = type(e)
        if m in (ast.Const, ast.Str, ast.Skip):
            return
        if m is ast.Var:
            self.resolve_name(e, e.name, env, f)
        elif m is ast.Ref:
            self.resolve_name(e, e.name, env, f, assigned=True)
        elif m is ast.Read:
            self.resolve_name(e, e.name, env, f, assigned=True)
        elif m is ast.Ignore:
            self.expr(e.expr, env, f)
        elif m is ast.Binop:
            self.expr(e.left, env, f)
            self.expr(e.right, env, f)
        elif m is ast.Assign:
            self.expr(e.target, env, f)
            self.expr(e.value, env, f)
        elif m is ast.ElemRef:
            self.expr(e.obj, env, f)
            self.expr(e.index, env, f)
        elif m is ast.Seq:
            self.expr(e.first, env, f)
            self.expr(e.second, env, f)
        elif m is ast.If:
            self.expr(e.cond, env, f)
            self.expr(e.then, env, f)
            self.expr(e.otherwise, env, f)
        elif m is ast.While:
            self.expr(e.cond, env, f)
            self.expr(e.body, env, f)
        elif m is ast.DoWhile:
            self.expr(e.body, env, f)
            self.expr(e.cond, env, f)
        elif m is ast.Write:
            self.expr(e.expr, env, f)
        elif m is ast.Call:
            self.call(e, env, f)
        elif m is ast.Elem:
            self.expr(e.obj, env, f)
            self.expr(e.index, env, f)
        elif m is ast.ArrayLit:
            for x in e.elems:
                self.expr(x, env, f)
        elif m is ast.Sexp:
            for x in e.elems:
                self.expr(x, env, f)
        elif m is ast.Lambda:
            self.lambda_count += 1
            g = FunCtx(f"Llambda_{self.lambda_count}", "lambda", f)
            f.children.append(g)
            f.fnrefs.add(g)
            self.funs.append(g)
            self.fn_of[id(e)] = g
            self.function_body(g, e.params, e.body, env, e.loc)
        elif m is ast.Scope:
            self.scope(e, env, f, top)
        elif m is ast.Case:
            self.expr(e.scrutinee, env, f)
            for br in e.branches:
                self.expr(br.body, env, f)
        else:
            raise AssertionError(f"cannot resolve {m.__name__}")

    def call(self, e: ast.Call, env, f):
        if type(e.callee) is ast.Var:
            b = self.lookup(e.callee.name, env)
            if b is not None and b.kind == "builtin":
                if b.orig == "printf" and len(e.args) < 1:
                    raise CompileError(
                        "printf needs a format argument", e.loc)
                if b.orig == "length" and len(e.args) != 1:
                    raise CompileError(
                        "length takes exactly one argument", e.loc)
                self.use[id(e.callee)] = b
                for a in e.args:
                    self.expr(a, env, f)
                return
        self.expr(e.callee, env, f)
        for a in e.args:
            self.expr(a, env, f)

    def scope(self, e: ast.Scope, env, f, top=False):
        frame = {}
        env = env + [frame]
        for d in e.defs:
            kind = {ast.VarDef: "var", ast.ValDef: "val",
                    ast.FunDef: "fun"}[type(d)]
            alpha = self.fresh_alpha(d.name)
            owner = None if top else f
            b = Binding(d.name, alpha, kind, owner)
            frame[d.name] = b
            self.defbind[id(d)] = b
            if top:
                self.globals.append(b)
            elif kind != "fun":
                f.locals.append(b)
            if kind == "fun":
                g = FunCtx("L" + alpha, d.name, f)
                b.fn = g
                f.children.append(g)
                self.funs.append(g)
                self.fn_of[id(d)] = g
        for d in e.defs:
            if type(d) is not ast.FunDef and d.init is not None:
                self.expr(d.init, env, f)
        for d in e.defs:
            if type(d) is ast.FunDef:
                g = self.fn_of[id(d)]
                self.function_body(g, d.params, d.body, env, d.loc)
        self.expr(e.body, env, f)

    def function_body(self, g: FunCtx, params, body, env, loc):
        frame = {}
        for name in params:
            alpha = self.fresh_alpha(name)
            b = Binding(name, alpha, "arg", g)
            b.slot = len(g.params)
            g.params.append(b)
            frame[name] = b
        g.body = body
        self.expr(body, env + [frame], g)


def _capture_fixpoint(funs: list[FunCtx]):
    capsets = {f: set() for f in funs}
    changed = True
    while changed:
        changed = False
        for f in funs:
            want = set()
            for b in f.refs:
                if (b.owner is not None and b.owner is not f
                        and b.kind != "fun"):
                    want.add(b)
            for g in f.fnrefs:
                want |= {b for b in capsets[g] if b.owner is not f}
            if want - capsets[f]:
                capsets[f] |= want
                changed = True
    for f in funs:
        assert all(b.owner is not None for b in capsets[f])
        f.captures = sorted(capsets[f], key=lambda b: b.alpha)
        f.cap_index = {b: i for i, b in enumerate(f.captures)}
        for b in capsets[f]:
            b.boxed = True
    for f in funs:
        for i, b in enumerate(f.locals):
            b.slot = i


@dataclass
class SMProgram:
    instrs: list[sm.Instr]
    globals: list[str] = field(default_factory=list)

    def text(self) -> str:
        return sm.to_text(self.instrs)


class _Emitter:
    def __init__(self, r: _Resolver):
        self.r = r
        self.out: list[sm.Instr] = []
        self.nlabels = 0

    def fresh(self) -> str:
        self.nlabels += 1
        return f"L{self.nlabels}"

    def emit(self, *instrs):
        self.out.extend(instrs)

    def place(self, b: Binding, f: FunCtx) -> sm.Designator:
        if b.owner is None:
            return sm.Global(b.alpha)
        if b.owner is f:
            if b.kind == "arg":
                return sm.Arg(b.slot)
            return sm.Local(b.slot)
        assert b in f.cap_index, f"{b} not captured by {f}"
        return sm.Captured(f.cap_index[b])

    def function(self, f: FunCtx):
        self.emit(sm.Begin(f.label, len(f.params), len(f.locals),
                           tuple(b.orig for b in f.captures)))
        for b in f.params:
            if b.boxed:
                self.emit(sm.Ld(sm.Arg(b.slot)), sm.MkArray(1),
                          sm.St(sm.Arg(b.slot)))
        for b in f.locals:
            if b.boxed:
                self.emit(sm.Const(0), sm.MkArray(1),
                          sm.St(sm.Local(b.slot)))
        self.expr(f.body, Kind.VOID if f.label == "main" else Kind.VAL, f)
        self.emit(sm.End())

    def load_binding(self, e, f: FunCtx):
        b = self.r.use[id(e)]
        if b.kind == "fun":
            g = b.fn
            self.emit(sm.Closure(
                g.label, tuple(self.place(c, f) for c in g.captures)))
            return
        self.emit(sm.Ld(self.place(b, f)))
        if b.boxed:
            self.emit(sm.Const(0), sm.Elem())

    def expr(self, e, k: Kind, f: FunCtx):
        m = type(e)
        if m is ast.Const:
            self.emit(sm.Const(ast_const_value(e)))
        elif m is ast.Str:
            self.emit(sm.String(e.value))
        elif m is ast.Var:
            self.load_binding(e, f)
        elif m is ast.Ignore:
            self.expr(e.expr, Kind.VAL, f)
            self.emit(sm.Drop())
        elif m is ast.Binop:
            self.expr(e.left, Kind.VAL, f)
            self.expr(e.right, Kind.VAL, f)
            self.emit(sm.Binop(e.op))
        elif m is ast.Assign:
            self.assign(e, f)
        elif m is ast.Seq:
            self.expr(e.first, Kind.VOID, f)
            self.expr(e.second, k, f)
        elif m is ast.Skip:
            pass
        elif m is ast.If:
            l_else = self.fresh()
            l_end = self.fresh()
            self.expr(e.cond, Kind.VAL, f)
            self.emit(sm.CJmp("z", l_else))
            self.expr(e.then, k, f)
            self.emit(sm.Jmp(l_end), sm.Label(l_else))
            self.expr(e.otherwise, k, f)
            self.emit(sm.Label(l_end))
        elif m is ast.While:
            l_loop = self.fresh()
            l_cond = self.fresh()
            self.emit(sm.Jmp(l_cond), sm.Label(l_loop))
            self.expr(e.body, Kind.VOID, f)
            self.emit(sm.Label(l_cond))
            self.expr(e.cond, Kind.VAL, f)
            self.emit(sm.CJmp("nz", l_loop))
        elif m is ast.DoWhile:
            l_loop = self.fresh()
            self.emit(sm.Label(l_loop))
            self.expr(e.body, Kind.VOID, f)
            self.expr(e.cond, Kind.VAL, f)
            self.emit(sm.CJmp("nz", l_loop))
        elif m is ast.Read:
            self.read(e, f)
        elif m is ast.Write:
            self.expr(e.expr, Kind.VAL, f)
            self.emit(sm.Write())
        elif m is ast.Call:
            self.apply(e, f)
        elif m is ast.Elem:
            self.expr(e.obj, Kind.VAL, f)
            self.expr(e.index, Kind.VAL, f)
            self.emit(sm.Elem())
        elif m is ast.ArrayLit:
            for x in e.elems:
                self.expr(x, Kind.VAL, f)
            self.emit(sm.MkArray(len(e.elems)))
        elif m is ast.Sexp:
            for x in e.elems:
                self.expr(x, Kind.VAL, f)
            self.emit(sm.MkSexp(e.tag, len(e.elems)))
        elif m is ast.Lambda:
            g = self.r.fn_of[id(e)]
            self.emit(sm.Closure(
                g.label, tuple(self.place(c, f) for c in g.captures)))
        elif m is ast.Scope:
            for d in e.defs:
                if type(d) is not ast.FunDef and d.init is not None:
                    self.init_def(d, f)
            self.expr(e.body, k, f)
        elif m is ast.Case:
            self.case(e, k, f)
        else:
            raise AssertionError(f"cannot emit {m.__name__}")

    def assign(self, e: ast.Assign, f: FunCtx):
        self.assign_to(e.target, e.value, e.loc, f)

    def assign_to(self, t, value, loc, f: FunCtx):
        """Leaves the assigned value on the stack on every path.

        A conditional target re-emits the store under each leaf, so the
        right-hand side appears once per leaf but runs exactly once.
        """
        m = type(t)
        if m is ast.ElemRef:
            self.expr(t.obj, Kind.VAL, f)
            self.expr(t.index, Kind.VAL, f)
            self.expr(value, Kind.VAL, f)
            self.emit(sm.Sta())
        elif m is ast.Ref:
            b = self.r.use[id(t)]
            if not b.mutable:
                self.expr(value, Kind.VAL, f)
                self.emit(sm.Fail((loc.line, loc.col), "immutable"))
            elif b.boxed:
                self.emit(sm.Ld(self.place(b, f)), sm.Const(0))
                self.expr(value, Kind.VAL, f)
                self.emit(sm.Sta())
            else:
                self.expr(value, Kind.VAL, f)
                self.emit(sm.Dup(), sm.St(self.place(b, f)))
        elif m is ast.If:
            l_else = self.fresh()
            l_end = self.fresh()
            self.expr(t.cond, Kind.VAL, f)
            self.emit(sm.CJmp("z", l_else))
            self.assign_to(t.then, value, loc, f)
            self.emit(sm.Jmp(l_end), sm.Label(l_else))
            self.assign_to(t.otherwise, value, loc, f)
            self.emit(sm.Label(l_end))
        elif m is ast.Seq:
            self.expr(t.first, Kind.VOID, f)
            self.assign_to(t.second, value, loc, f)
        elif m is ast.Scope:
            for d in t.defs:
                if type(d) is not ast.FunDef and d.init is not None:
                    self.init_def(d, f)
            self.assign_to(t.body, value, loc, f)
        elif m is ast.Case:
            self.case(t, Kind.VAL, f,
                      body=lambda br: self.assign_to(br.body, value, loc, f))
        else:
            raise AssertionError(f"cannot assign to {m.__name__}")

    def read(self, e: ast.Read, f: FunCtx):
        b = self.r.use[id(e)]
        if not b.mutable:
            self.emit(sm.Read(),
                      sm.Fail((e.loc.line, e.loc.col), "immutable"),
                      sm.Drop())
        elif b.boxed:
            self.emit(sm.Ld(self.place(b, f)), sm.Const(0), sm.Read(),
                      sm.Sta(), sm.Drop())
        else:
            self.emit(sm.Read(), sm.St(self.place(b, f)))

    def init_def(self, d, f: FunCtx):
        b = self.r.defbind[id(d)]
        if b.boxed:
            self.emit(sm.Ld(self.place(b, f)), sm.Const(0))
            self.expr(d.init, Kind.VAL, f)
            self.emit(sm.Sta(), sm.Drop())
        else:
            self.expr(d.init, Kind.VAL, f)
            self.emit(sm.St(self.place(b, f)))

    def apply(self, e: ast.Call, f: FunCtx):
        callee = e.callee
        if type(callee) is ast.Var:
            b = self.r.use[id(callee)]
            if b.kind == "builtin":
                for a in e.args:
                    self.expr(a, Kind.VAL, f)
                self.emit(sm.Call(BUILTIN_LABELS[b.orig], len(e.args)))
                return
            if b.kind == "fun" and not b.fn.captures:
                for a in e.args:
                    self.expr(a, Kind.VAL, f)
                self.emit(sm.Call(b.fn.label, len(e.args)))
                return
        self.expr(callee, Kind.VAL, f)
        for a in e.args:
            self.expr(a, Kind.VAL, f)
        self.emit(sm.CallC(len(e.args)))

    def case(self, e: ast.Case, k: Kind, f: FunCtx, body=None):
        if body is None:
            body = lambda br: self.expr(br.body, k, f)
        self.expr(e.scrutinee, Kind.VAL, f)
        l_end = self.fresh()
        for br in e.branches:
            l_next = self.fresh()
            self.emit(sm.Dup())
            self.pattern_test(br.pattern, f)
            self.emit(sm.CJmp("z", l_next), sm.Drop())
            body(br)
            self.emit(sm.Jmp(l_end), sm.Label(l_next))
        self.emit(sm.Fail((e.loc.line, e.loc.col), "match"))
        if k is not Kind.VAL:
            self.emit(sm.Drop())
        self.emit(sm.Label(l_end))

    def pattern_test(self, p, f: FunCtx):
        """Consumes the value on top of the stack, leaves 1 or 0."""
        m = type(p)
        if m is ast.PWild:
            self.emit(sm.Drop(), sm.Const(1))
            return
        if m is ast.PConst:
            self.emit(sm.Patt("=n", p.value))
            return
        l_no = self.fresh()
        l_done = self.fresh()
        self.emit(sm.Dup())
        if m is ast.PSexp:
            self.emit(sm.Tag(p.tag, len(p.subs)))
        else:
            assert m is ast.PArray
            self.emit(sm.Patt("#array", len(p.subs)))
        self.emit(sm.CJmp("z", l_no))
        for idx, sub in enumerate(p.subs):
            self.emit(sm.Dup(), sm.Const(idx), sm.Elem())
            self.pattern_test(sub, f)
            self.emit(sm.CJmp("z", l_no))
        self.emit(sm.Drop(), sm.Const(1), sm.Jmp(l_done),
                  sm.Label(l_no), sm.Drop(), sm.Const(0),
                  sm.Label(l_done))


def ast_const_value(e: ast.Const) -> int:
    return wrap63(e.value)


def resolve_program(program: ast.Program) -> _Resolver:
    """Name checks shared by every mode; raises CompileError."""
    r = _Resolver()
    r.run(program)
    return r


def compile_program(program: ast.Program) -> SMProgram:
    r = resolve_program(program)
    _capture_fixpoint(r.funs)
    emitter = _Emitter(r)
    for f in r.funs:
        emitter.function(f)
    sm.check_invariants(emitter.out)
    return SMProgram(emitter.out, [b.alpha for b in r.globals])


def run_sm(prog: SMProgram, world) -> sm.Machine:
    machine = sm.Machine(prog.instrs, world, prog.globals)
    try:
        machine.run()
    except Exception as err:
        if hasattr(err, "exit_code"):
            err.partial = world.output()
        raise
    return machine
