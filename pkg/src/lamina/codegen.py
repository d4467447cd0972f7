"""x86-64 code generation by symbolic interpretation of machine code.

The generator makes one left-to-right pass over each function.  Instead
of values it tracks the operand-stack depth, and each depth maps to a
fixed location: the first five entries live in the callee-owned
registers rbx, r12, r13, r14, r15, deeper entries spill to dedicated
frame slots.  Labels reached by a forward jump adopt the depth recorded
at the jump; labels reached only by falling through keep the current
depth.  The code-shape invariants checked on the instruction list
guarantee those two rules never disagree, which is what makes a single
pass sufficient.

Integers are encoded as 2v+1 and pointers stay 8-aligned, so the low
bit separates the two at run time and arithmetic wraps at 63 bits for
free.  Addition and subtraction work directly on encodings; compare
instructions act on encodings because the mapping is monotone; multiply
and divide decode, operate, and re-encode.

Every frame word the collector can see (locals, register-save area,
closure slot, spill slots, the alignment pad) is initialized to the
encoding of zero, and calls into the runtime save exactly the live
operand registers into the save area first.  The stack region between
the current argument block and the base of "main" therefore contains
only value encodings, return addresses, and saved frame pointers, which
the collector separates with an address-range test.

Stack alignment follows the System V rule: frames are sized so rsp is
16-aligned between instructions, and each call site pads its argument
block to an even number of pushes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import sm
from .errors import CodegenInvariantError
from .smcompile import SMProgram

REGS = ("%rbx", "%r12", "%r13", "%r14", "%r15")
K = len(REGS)

IMM_MIN = -(2 ** 31)
IMM_MAX = 2 ** 31 - 1

TAG_STRING = 1
TAG_ARRAY = 2
TAG_SEXP = 3
TAG_CLOSURE = 4


def encode(v: int) -> int:
    """2v+1 truncated to a signed 64-bit word."""
    u = (2 * v + 1) & (2 ** 64 - 1)
    return u - 2 ** 64 if u >= 2 ** 63 else u


def pack_tag(tag: str) -> int:
    key = tag[:5].encode()
    return int.from_bytes(key, "little")


@dataclass
class FunStats:
    name: str
    max_depth: int = 0
    nspills: int = 0
    nlocals: int = 0
    trace: list = field(default_factory=list)


@dataclass
class CodegenResult:
    asm: str
    stats: dict[str, FunStats]


class _Strings:
    """Interned read-only data: string templates and failure messages."""

    def __init__(self):
        self.templates: dict[str, str] = {}
        self.messages: dict[str, str] = {}

    def template(self, value: str) -> str:
        if value not in self.templates:
            self.templates[value] = f"Lstr_{len(self.templates)}"
        return self.templates[value]

    def message(self, text: str) -> str:
        if text not in self.messages:
            self.messages[text] = f".Lmsg_{len(self.messages)}"
        return self.messages[text]

    def emit(self, out: list[str]):
        out.append('\t.section .rodata')
        for value, label in self.templates.items():
            data = value.encode()
            out.append("\t.p2align 3")
            out.append(f"{label}:")
            out.append(f"\t.quad {(len(data) << 8) | TAG_STRING}")
            payload = ", ".join(str(b) for b in data + b"\x00")
            out.append(f"\t.byte {payload}")
        for text, label in self.messages.items():
            quoted = text.replace("\\", "\\\\").replace('"', '\\"')
            out.append(f'{label}:')
            out.append(f'\t.asciz "{quoted}"')


class _FunGen:
    """Generates one function; body first, prologue once sizes are known."""

    def __init__(self, begin: sm.Begin, strings: _Strings, fresh):
        self.begin = begin
        self.strings = strings
        self.fresh = fresh
        self.is_main = begin.name == "main"
        self.base = 40 if self.is_main else 0
        self.nlocals = begin.nlocals
        self.body: list[str] = []
        self.stats = FunStats(begin.name, nlocals=begin.nlocals)
        self.depth = 0
        self.label_depths: dict[str, int] = {}

    # -- frame geometry ------------------------------------------------------

    def local_off(self, i: int) -> int:
        return -(self.base + 8 * (i + 1))

    def save_off(self, j: int) -> int:
        return -(self.base + 8 * (self.nlocals + j + 1))

    def closure_off(self) -> int:
        return -(self.base + 8 * (self.nlocals + K + 1))

    def spill_off(self, s: int) -> int:
        return -(self.base + 8 * (self.nlocals + K + 2 + s))

    def loc(self, d: int) -> str:
        if d < K:
            return REGS[d]
        return f"{self.spill_off(d - K)}(%rbp)"

    def frame_words(self) -> int:
        nspills = max(0, self.stats.max_depth - K)
        words = self.nlocals + K + 1 + nspills
        if (8 * words + self.base) % 16 != 0:
            words += 1
        return words

    # -- emission helpers ----------------------------------------------------

    def op(self, line: str):
        self.body.append("\t" + line)

    def raw(self, line: str):
        self.body.append(line)

    def move(self, src: str, dst: str):
        if src == dst:
            return
        if src.startswith("%") or dst.startswith("%"):
            self.op(f"movq {src}, {dst}")
        else:
            self.op(f"movq {src}, %r10")
            self.op(f"movq %r10, {dst}")

    def load_imm(self, value: int, dst: str):
        if IMM_MIN <= value <= IMM_MAX:
            self.op(f"movq ${value}, {dst}")
        elif dst.startswith("%"):
            self.op(f"movabsq ${value}, {dst}")
        else:
            self.op(f"movabsq ${value}, %r10")
            self.op(f"movq %r10, {dst}")

    def push_loc(self, src: str):
        self.op(f"pushq {src}")

    def save_live(self, upto: int):
        for j in range(min(upto, K)):
            self.op(f"movq {REGS[j]}, {self.save_off(j)}(%rbp)")

    def restore_live(self, upto: int):
        for j in range(min(upto, K)):
            self.op(f"movq {self.save_off(j)}(%rbp), {REGS[j]}")

    def runtime_call(self, name: str, args: list[str], result_depth: int,
                     imm_args: list[int] | None = None,
                     want_result: bool = True):
        """Pushes `args` right-to-left (plus immediates deeper still),
        aligns, and calls a (count, args-pointer) runtime entry."""
        imm_args = imm_args or []
        total = len(args) + len(imm_args)
        pad = total % 2
        self.save_live(result_depth)
        if pad:
            self.op("pushq $1")
        for a in reversed(args):
            self.push_loc(a)
        for v in reversed(imm_args):
            if IMM_MIN <= v <= IMM_MAX:
                self.op(f"pushq ${v}")
            else:
                self.op(f"movabsq ${v}, %r10")
                self.op("pushq %r10")
        self.op(f"movq ${total}, %rdi")
        self.op("movq %rsp, %rsi")
        self.op(f"call {name}")
        if total + pad:
            self.op(f"addq ${8 * (total + pad)}, %rsp")
        if want_result:
            self.move("%rax", self.loc(result_depth))
        self.restore_live(result_depth)

    # -- instruction translation ---------------------------------------------

    def instr(self, i: sm.Instr):
        before = self.depth
        self.raw(f"# {sm.instr_text(i)}")
        result_loc = self.translate(i)
        self.depth = before + sm.stack_effect(i)
        if type(i) is sm.Label:
            if i.name in self.label_depths:
                self.depth = self.label_depths[i.name]
            else:
                self.label_depths[i.name] = self.depth
        elif type(i) in (sm.Jmp, sm.CJmp):
            target = self.depth
            seen = self.label_depths.setdefault(i.label, target)
            if seen != target:
                raise CodegenInvariantError(
                    f"one-pass depth clash at {i.label}: {seen} vs {target}")
        self.stats.max_depth = max(self.stats.max_depth, self.depth)
        self.stats.trace.append(
            (sm.instr_text(i), before, self.depth, result_loc))

    def translate(self, i: sm.Instr):
        m = type(i)
        d = self.depth
        if m is sm.Const:
            dst = self.loc(d)
            self.load_imm(encode(i.value), dst)
            return dst
        if m is sm.String:
            label = self.strings.template(i.value)
            self.save_live(d)
            self.op(f"leaq {label}(%rip), %rdi")
            self.op("movq %rsp, %rsi")
            self.op("call Bstring")
            dst = self.loc(d)
            self.move("%rax", dst)
            self.restore_live(d)
            return dst
        if m is sm.Ld:
            dst = self.loc(d)
            self.load_place(i.place, dst)
            return dst
        if m is sm.St:
            self.store_place(i.place, self.loc(d - 1))
            return None
        if m is sm.Drop:
            return None
        if m is sm.Dup:
            dst = self.loc(d)
            self.move(self.loc(d - 1), dst)
            return dst
        if m is sm.Binop:
            return self.binop(i.op, d)
        if m is sm.Jmp:
            self.op(f"jmp {i.label}")
            return None
        if m is sm.CJmp:
            self.op(f"cmpq $1, {self.loc(d - 1)}")
            self.op(("je " if i.cond == "z" else "jne ") + i.label)
            return None
        if m is sm.Label:
            self.raw(f"{i.name}:")
            return None
        if m is sm.Read:
            self.runtime_call("Lread", [], d)
            return self.loc(d)
        if m is sm.Write:
            self.runtime_call("Lwrite", [self.loc(d - 1)], d - 1,
                              want_result=False)
            return None
        if m is sm.Call:
            if i.name in sm.BUILTIN_LABELS:
                args = [self.loc(d - i.nargs + j) for j in range(i.nargs)]
                self.runtime_call(i.name, args, d - i.nargs)
            else:
                self.user_call(i.name, i.nargs, d)
            return self.loc(d - i.nargs)
        if m is sm.CallC:
            self.closure_call(i.nargs, d)
            return self.loc(d - i.nargs - 1)
        if m is sm.Closure:
            self.build_closure(i, d)
            return self.loc(d)
        if m is sm.MkSexp:
            args = [self.loc(d - i.arity + j) for j in range(i.arity)]
            self.runtime_call("Bsexp", args, d - i.arity,
                              imm_args=[encode(pack_tag(i.tag))])
            return self.loc(d - i.arity)
        if m is sm.MkArray:
            args = [self.loc(d - i.arity + j) for j in range(i.arity)]
            self.runtime_call("Barray", args, d - i.arity)
            return self.loc(d - i.arity)
        if m is sm.Elem:
            self.runtime_call("Belem", [self.loc(d - 2), self.loc(d - 1)],
                              d - 2)
            return self.loc(d - 2)
        if m is sm.Sta:
            self.runtime_call(
                "Bsta",
                [self.loc(d - 3), self.loc(d - 2), self.loc(d - 1)],
                d - 3)
            return self.loc(d - 3)
        if m is sm.Tag:
            return self.tag_test(i, d)
        if m is sm.Patt:
            return self.patt_test(i, d)
        if m is sm.End:
            return None # the epilogue follows immediately
        if m is sm.Fail:
            line, col = i.loc
            if i.reason == "match":
                text = f"match failure at {line}:{col}"
            else:
                text = f"assignment to immutable binding at {line}:{col}"
            label = self.strings.message(text)
            self.op(f"leaq {label}(%rip), %rdi")
            self.op("call rt_fail")
            return None
        raise AssertionError(f"cannot translate {type(i).__name__}")

    def load_place(self, p: sm.Designator, dst: str):
        t = type(p)
        if t is sm.Global:
            self.move(f"global_{p.name}(%rip)", dst)
        elif t is sm.Local:
            self.move(f"{self.local_off(p.index)}(%rbp)", dst)
        elif t is sm.Arg:
            self.move(f"{16 + 8 * p.index}(%rbp)", dst)
        else:
            self.op(f"movq {self.closure_off()}(%rbp), %r10")
            self.op(f"movq {8 * (p.index + 1)}(%r10), %r11")
            self.move("%r11", dst)

    def store_place(self, p: sm.Designator, src: str):
        t = type(p)
        if t is sm.Global:
            self.move(src, f"global_{p.name}(%rip)")
        elif t is sm.Local:
            self.move(src, f"{self.local_off(p.index)}(%rbp)")
        elif t is sm.Arg:
            self.move(src, f"{16 + 8 * p.index}(%rbp)")
        else:
            self.op(f"movq {self.closure_off()}(%rbp), %r10")
            if src.startswith("%"):
                self.op(f"movq {src}, {8 * (p.index + 1)}(%r10)")
            else:
                self.op(f"movq {src}, %r11")
                self.op(f"movq %r11, {8 * (p.index + 1)}(%r10)")

    def check_ints(self, x: str, y: str, stub: str):
        self.op(f"testq $1, {x}")
        self.op(f"je {stub}")
        self.op(f"testq $1, {y}")
        self.op(f"je {stub}")

    def binop(self, op: str, d: int) -> str:
        a = self.loc(d - 2)
        b = self.loc(d - 1)
        if op in ("+", "-"):
            self.op(f"movq {a}, %r10")
            self.op(f"movq {b}, %r11")
            self.check_ints("%r10", "%r11", "lamina_badarith")
            self.op(f"{'addq' if op == '+' else 'subq'} %r11, %r10")
            self.op(f"{'decq' if op == '+' else 'incq'} %r10")
            self.move("%r10", a)
        elif op == "*":
            self.op(f"movq {a}, %r10")
            self.op(f"movq {b}, %r11")
            self.check_ints("%r10", "%r11", "lamina_badarith")
            self.op("sarq $1, %r10")
            self.op("sarq $1, %r11")
            self.op("imulq %r11, %r10")
            self.op("leaq 1(%r10,%r10), %r10")
            self.move("%r10", a)
        elif op in ("/", "%"):
            self.op(f"movq {a}, %rax")
            self.op(f"movq {b}, %r11")
            self.check_ints("%rax", "%r11", "lamina_badarith")
            self.op("sarq $1, %rax")
            self.op("sarq $1, %r11")
            self.op("testq %r11, %r11")
            self.op("je lamina_div0")
            self.op("cqto")
            self.op("idivq %r11")
            src = "%rax" if op == "/" else "%rdx"
            self.op(f"leaq 1({src},{src}), %r10")
            self.move("%r10", a)
        elif op in ("==", "!="):
            cc = "e" if op == "==" else "ne"
            self.op(f"movq {a}, %r10")
            self.op(f"cmpq {b}, %r10")
            self.op(f"set{cc} %r10b")
            self.op("movzbq %r10b, %r10")
            self.op("leaq 1(%r10,%r10), %r10")
            self.move("%r10", a)
        elif op in ("<", "<=", ">", ">="):
            cc = {"<": "l", "<=": "le", ">": "g", ">=": "ge"}[op]
            self.op(f"movq {a}, %r10")
            self.op(f"movq {b}, %r11")
            self.check_ints("%r10", "%r11", "lamina_badcmp")
            self.op(f"cmpq %r11, %r10")
            self.op(f"set{cc} %r10b")
            self.op("movzbq %r10b, %r10")
            self.op("leaq 1(%r10,%r10), %r10")
            self.move("%r10", a)
        else:
            bit = "andq" if op == "&&" else "orq"
            self.op(f"movq {a}, %r10")
            self.op("cmpq $1, %r10")
            self.op("setne %r10b")
            self.op("movzbq %r10b, %r10")
            self.op(f"movq {b}, %r11")
            self.op("cmpq $1, %r11")
            self.op("setne %r11b")
            self.op("movzbq %r11b, %r11")
            self.op(f"{bit} %r11, %r10")
            self.op("leaq 1(%r10,%r10), %r10")
            self.move("%r10", a)
        return a

    def user_call(self, name: str, nargs: int, d: int):
        base = d - nargs
        self.save_live(base)
        pad = nargs % 2
        if pad:
            self.op("pushq $1")
        for j in range(nargs - 1, -1, -1):
            self.push_loc(self.loc(base + j))
        self.op(f"movl ${nargs}, %eax")
        self.op(f"call {name}")
        if nargs + pad:
            self.op(f"addq ${8 * (nargs + pad)}, %rsp")
        self.move("%rax", self.loc(base))
        self.restore_live(base)

    def closure_call(self, nargs: int, d: int):
        base = d - nargs - 1
        self.save_live(base)
        self.op(f"movq {self.loc(base)}, %r10")
        self.op("testq $1, %r10")
        self.op("jnz lamina_notclos")
        self.op(f"cmpb ${TAG_CLOSURE}, -8(%r10)")
        self.op("jne lamina_notclos")
        pad = nargs % 2
        if pad:
            self.op("pushq $1")
        for j in range(nargs - 1, -1, -1):
            self.push_loc(self.loc(base + 1 + j))
        self.op("movq %r10, %rdi")
        self.op(f"movl ${nargs}, %eax")
        self.op("call *(%r10)")
        if nargs + pad:
            self.op(f"addq ${8 * (nargs + pad)}, %rsp")
        self.move("%rax", self.loc(base))
        self.restore_live(base)

    def build_closure(self, i: sm.Closure, d: int):
        self.save_live(d)
        total = len(i.places) + 1
        pad = total % 2
        if pad:
            self.op("pushq $1")
        for p in reversed(i.places):
            t = type(p)
            if t is sm.Global:
                self.op(f"pushq global_{p.name}(%rip)")
            elif t is sm.Local:
                self.op(f"pushq {self.local_off(p.index)}(%rbp)")
            elif t is sm.Arg:
                self.op(f"pushq {16 + 8 * p.index}(%rbp)")
            else:
                self.op(f"movq {self.closure_off()}(%rbp), %r10")
                self.op(f"pushq {8 * (p.index + 1)}(%r10)")
        self.op(f"leaq {i.name}(%rip), %r10")
        self.op("pushq %r10")
        self.op(f"movq ${total}, %rdi")
        self.op("movq %rsp, %rsi")
        self.op("call Bclosure")
        self.op(f"addq ${8 * (total + pad)}, %rsp")
        self.move("%rax", self.loc(d))
        self.restore_live(d)

    def tag_test(self, i: sm.Tag, d: int) -> str:
        v = self.loc(d - 1)
        no = self.fresh()
        done = self.fresh()
        self.op(f"movq {v}, %r10")
        self.op("testq $1, %r10")
        self.op(f"jnz {no}")
        self.op(f"cmpb ${TAG_SEXP}, -8(%r10)")
        self.op(f"jne {no}")
        self.op("movq -8(%r10), %r11")
        self.op("shrq $8, %r11")
        self.op(f"cmpq ${i.arity + 1}, %r11")
        self.op(f"jne {no}")
        self.load_imm(encode(pack_tag(i.tag)), "%r11")
        self.op("cmpq (%r10), %r11")
        self.op(f"jne {no}")
        self.load_imm(encode(1), v)
        self.op(f"jmp {done}")
        self.raw(f"{no}:")
        self.load_imm(encode(0), v)
        self.raw(f"{done}:")
        return v

    def patt_test(self, i: sm.Patt, d: int) -> str:
        v = self.loc(d - 1)
        if i.kind == "=n":
            enc = encode(i.value)
            self.op(f"movq {v}, %r10")
            if IMM_MIN <= enc <= IMM_MAX:
                self.op(f"cmpq ${enc}, %r10")
            else:
                self.op(f"movabsq ${enc}, %r11")
                self.op("cmpq %r11, %r10")
            self.op("sete %r10b")
            self.op("movzbq %r10b, %r10")
            self.op("leaq 1(%r10,%r10), %r10")
            self.move("%r10", v)
            return v
        no = self.fresh()
        done = self.fresh()
        self.op(f"movq {v}, %r10")
        self.op("testq $1, %r10")
        self.op(f"jnz {no}")
        self.op(f"cmpb ${TAG_ARRAY}, -8(%r10)")
        self.op(f"jne {no}")
        self.op("movq -8(%r10), %r11")
        self.op("shrq $8, %r11")
        self.op(f"cmpq ${i.value}, %r11")
        self.op(f"jne {no}")
        self.load_imm(encode(1), v)
        self.op(f"jmp {done}")
        self.raw(f"{no}:")
        self.load_imm(encode(0), v)
        self.raw(f"{done}:")
        return v

    # -- function assembly -----------------------------------------------

    def finish(self) -> list[str]:
        self.stats.nspills = max(0, self.stats.max_depth - K)
        words = self.frame_words()
        out = []
        out.append("\t.p2align 4")
        if self.is_main:
            out.append("\t.globl main")
        out.append(f"{self.begin.name}:")
        if not self.is_main:
            out.append(f"\tcmpq ${self.begin.nargs}, %rax")
            out.append(f"\tjne .Lwa_{self.begin.name}")
        out.append("\tpushq %rbp")
        out.append("\tmovq %rsp, %rbp")
        if self.is_main:
            for r in REGS:
                out.append(f"\tpushq {r}")
        out.append(f"\tsubq ${8 * words}, %rsp")
        if words > 16:
            out.append(f"\tleaq {-(self.base + 8 * words)}(%rbp), %r10")
            out.append(f"\tmovq ${words}, %r11")
            init = f".Linit_{self.begin.name}"
            out.append(f"{init}:")
            out.append("\tmovq $1, (%r10)")
            out.append("\taddq $8, %r10")
            out.append("\tdecq %r11")
            out.append(f"\tjnz {init}")
        else:
            for w in range(1, words + 1):
                out.append(f"\tmovq $1, {-(self.base + 8 * w)}(%rbp)")
        if self.is_main:
            out.append("\tleaq -40(%rbp), %rdi")
            out.append("\tleaq globals_start(%rip), %rsi")
            out.append("\tleaq globals_end(%rip), %rdx")
            out.append("\tcall rt_init")
        elif self.begin.captured:
            out.append(f"\tmovq %rdi, {self.closure_off()}(%rbp)")
        out.extend(self.body)
        out.append(f"{self.begin.name}_epilogue:")
        if self.is_main:
            for j, r in enumerate(REGS):
                out.append(f"\tmovq {-8 * (j + 1)}(%rbp), {r}")
            out.append("\txorl %eax, %eax")
        else:
            out.append(f"\tmovq {self.loc(0)}, %rax")
        out.append("\tmovq %rbp, %rsp")
        out.append("\tpopq %rbp")
        out.append("\tret")
        if not self.is_main:
            out.append(f".Lwa_{self.begin.name}:")
            out.append(f"\tmovq ${self.begin.nargs}, %rdi")
            out.append("\tmovq %rax, %rsi")
            out.append("\tandq $-16, %rsp")
            out.append("\tcall rt_wrongargs")
        return out


def compile_to_asm(prog: SMProgram) -> CodegenResult:
    sm.check_invariants(prog.instrs)
    strings = _Strings()
    counter = [0]

    def fresh():
        counter[0] += 1
        return f".Lt{counter[0]}"

    stats = {}
    lines = ['\t.text']
    for start, end in sm.split_functions(prog.instrs):
        gen = _FunGen(prog.instrs[start], strings, fresh)
        for idx in range(start + 1, end):
            gen.instr(prog.instrs[idx])
        if gen.depth != (0 if gen.is_main else 1):
            raise CodegenInvariantError(
                f"{gen.begin.name} ends at depth {gen.depth}")
        lines.extend(gen.finish())
        stats[gen.begin.name] = gen.stats

    stubs = [("lamina_div0", "division by zero"),
             ("lamina_notclos", "call of non-closure value"),
             ("lamina_badarith", "arithmetic on non-integer values"),
             ("lamina_badcmp", "comparison of non-integer values")]
    for stub, text in stubs:
        lines.append(f"{stub}:")
        lines.append(f"\tleaq {strings.message(text)}(%rip), %rdi")
        lines.append("\tandq $-16, %rsp")
        lines.append("\tcall rt_fail")

    strings.emit(lines)

    lines.append("\t.data")
    lines.append("\t.p2align 3")
    lines.append("globals_start:")
    for name in prog.globals:
        lines.append(f"global_{name}:")
        lines.append("\t.quad 1")
    lines.append("globals_end:")
    lines.append('\t.section .note.GNU-stack,"",@progbits')
    return CodegenResult("\n".join(lines) + "\n", stats)
