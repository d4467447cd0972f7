"""Lexer and recursive-descent parser.

The parser output is a raw Program: no kind annotations yet, but with all
source-level sugar already removed:

  * if/elif chains become nested If nodes (missing else arms become Skip);
  * `for init, cond, step do body od` becomes `init; while cond do body;
    step od`;
  * do-while survives as its own node (expanding it into `body; while`
    would duplicate the body and grow nested loops exponentially);
  * pattern binders are replaced by wildcards, with one immutable `val`
    per binder (scrutinee[path...]) prepended to the branch body, bound
    left to right; a non-variable scrutinee is first bound to a fresh
    `val` so every binder indexes a variable.

Fresh names use the `_case_<n>` family and are chosen against the full
identifier set of the source, so they can never collide, even when the
source itself is the output of the pretty printer.

Precedence, loosest to tightest:
    :=  (right)   !!  (left)   &&  (left)   == != < <= > >=  (non-assoc)
    + - (left)    * / % (left)   then call/index postfix.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import ast
from .ast import Loc
from .errors import LexError, ParseError

KEYWORDS = {
    "skip", "if", "then", "elif", "else", "fi", "while", "do", "od",
    "for", "case", "of", "esac", "fun", "var", "val", "read", "write",
}

# Longest match first.
SYMBOLS = [
    ":=", "==", "!=", "<=", ">=", "&&", "!!", "->",
    "(", ")", "[", "]", "{", "}", ",", ";", "|",
    "+", "-", "*", "/", "%", "<", ">", "=",
]

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")

STRING_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}


@dataclass
class Token:
    kind: str          # num str char id uid kw sym eof
    text: str
    value: object
    loc: Loc


def tokenize(src: str) -> list[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(src)

    def loc():
        return Loc(line, col)

    def advance(k=1):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = src[i]
        if c in " \t\r\n":
            advance()
            continue
        if src.startswith("--", i):
            while i < n and src[i] != "\n":
                advance()
            continue
        start = loc()
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            text = src[i:j]
            toks.append(Token("num", text, int(text), start))
            advance(j - i)
            continue
        if c == '"':
            advance()
            buf = []
            while True:
                if i >= n or src[i] == "\n":
                    raise LexError("unterminated string literal", start)
                ch = src[i]
                if ch == '"':
                    advance()
                    break
                if ch == "\\":
                    advance()
                    if i >= n or src[i] not in STRING_ESCAPES:
                        raise LexError("bad escape in string literal", loc())
                    buf.append(STRING_ESCAPES[src[i]])
                    advance()
                else:
                    buf.append(ch)
                    advance()
            toks.append(Token("str", "".join(buf), "".join(buf), start))
            continue
        if c == "'":
            advance()
            if i >= n:
                raise LexError("unterminated character literal", start)
            if src[i] == "\\":
                advance()
                if i >= n or src[i] not in STRING_ESCAPES:
                    raise LexError("bad escape in character literal", loc())
                ch = STRING_ESCAPES[src[i]]
                advance()
            else:
                ch = src[i]
                advance()
            if i >= n or src[i] != "'":
                raise LexError("unterminated character literal", start)
            advance()
            toks.append(Token("char", ch, ord(ch), start))
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            advance(j - i)
            if text in KEYWORDS:
                toks.append(Token("kw", text, text, start))
            elif text[0].isupper():
                toks.append(Token("uid", text, text, start))
            else:
                toks.append(Token("id", text, text, start))
            continue
        for sym in SYMBOLS:
            if src.startswith(sym, i):
                advance(len(sym))
                toks.append(Token("sym", sym, sym, start))
                break
        else:
            raise LexError(f"stray character {c!r}", start)
    toks.append(Token("eof", "", None, loc()))
    return toks


# Tokens that may start an expression; used to decide whether a `;` has a
# right-hand continuation.
_EXPR_KW = {"skip", "if", "while", "do", "for", "case", "read", "write", "fun"}


def _starts_expr(t: Token) -> bool:
    if t.kind in ("num", "str", "char", "id", "uid"):
        return True
    if t.kind == "sym":
        return t.text in ("(", "[")
    if t.kind == "kw":
        return t.text in _EXPR_KW
    return False


class _FreshNames:
    """`_case_<n>` names, skipping anything present in the source."""

    def __init__(self, taken):
        self.taken = taken
        self.next = 0

    def fresh(self) -> str:
        while True:
            name = f"_case_{self.next}"
            self.next += 1
            if name not in self.taken:
                return name


class Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0
        taken = {t.text for t in toks if t.kind in ("id", "uid")}
        self.names = _FreshNames(taken)

    # -- token plumbing ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, ahead=1) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def at(self, kind: str, text=None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, *words) -> bool:
        return self.tok.kind == "kw" and self.tok.text in words

    def expect(self, kind: str, text=None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            raise ParseError(f"expected {want!r}, found {self.tok.text!r}",
                             self.tok.loc)
        return self.next()

    # -- program and scopes ------------------------------------------------

    def parse_program(self) -> ast.Program:
        body = self.parse_scope(("eof", None))
        self.expect("eof")
        return ast.Program(body)

    def parse_scope(self, *stops) -> ast.Expr:
        """definitions followed by an optional statement sequence."""
        loc = self.tok.loc
        defs = []
        while True:
            if self.at_kw("var"):
                defs.extend(self._parse_var_defs())
            elif self.at_kw("val"):
                defs.extend(self._parse_val_defs())
            elif self.at_kw("fun") and self.peek().kind == "id":
                defs.append(self._parse_fun_def())
            else:
                break
        if self._at_stop(stops):
            body = ast.Skip(self.tok.loc)
        else:
            body = self.parse_seq(stops)
        if defs:
            names = []
            for d in defs:
                if d.name in names:
                    raise ParseError(f"duplicate definition of {d.name!r} "
                                     "in one scope", d.loc)
                names.append(d.name)
            return ast.Scope(loc, defs, body)
        return body

    def _at_stop(self, stops) -> bool:
        for kind, text in stops:
            if self.at(kind, text):
                return True
        return False

    def _parse_var_defs(self):
        self.expect("kw", "var")
        defs = []
        while True:
            t = self.expect("id")
            init = None
            if self.at("sym", "="):
                self.next()
                init = self.parse_expr()
            defs.append(ast.VarDef(t.loc, t.text, init))
            if self.at("sym", ","):
                self.next()
                continue
            break
        self.expect("sym", ";")
        return defs

    def _parse_val_defs(self):
        self.expect("kw", "val")
        defs = []
        while True:
            t = self.expect("id")
            self.expect("sym", "=")
            defs.append(ast.ValDef(t.loc, t.text, self.parse_expr()))
            if self.at("sym", ","):
                self.next()
                continue
            break
        self.expect("sym", ";")
        return defs

    def _parse_fun_def(self):
        loc = self.expect("kw", "fun").loc
        name = self.expect("id").text
        params = self._parse_params()
        body = self._parse_block()
        return ast.FunDef(loc, name, params, body)

    def _parse_params(self):
        self.expect("sym", "(")
        params = []
        while not self.at("sym", ")"):
            t = self.expect("id")
            if t.text in params:
                raise ParseError(f"duplicate parameter {t.text!r}", t.loc)
            params.append(t.text)
            if self.at("sym", ","):
                self.next()
        self.expect("sym", ")")
        return params

    def _parse_block(self) -> ast.Expr:
        self.expect("sym", "{")
        body = self.parse_scope(("sym", "}"))
        self.expect("sym", "}")
        return body

    # -- statement sequences -----------------------------------------------

    def parse_seq(self, stops) -> ast.Expr:
        first = self.parse_expr()
        if self.at("sym", ";"):
            loc = self.tok.loc
            self.next()
            # A trailing separator before a closing keyword is tolerated.
            if self._at_stop(stops) or not _starts_expr(self.tok):
                return first
            return ast.Seq(loc, first, self.parse_seq(stops))
        return first

    # -- expressions -------------------------------------------------------

    def parse_expr(self) -> ast.Expr:
        return self._parse_assign()

    def _parse_assign(self) -> ast.Expr:
        left = self._parse_disj()
        if self.at("sym", ":="):
            loc = self.next().loc
            right = self._parse_assign()
            return ast.Assign(loc, left, right)
        return left

    def _parse_disj(self) -> ast.Expr:
        e = self._parse_conj()
        while self.at("sym", "!!"):
            loc = self.next().loc
            e = ast.Binop(loc, "!!", e, self._parse_conj())
        return e

    def _parse_conj(self) -> ast.Expr:
        e = self._parse_cmp()
        while self.at("sym", "&&"):
            loc = self.next().loc
            e = ast.Binop(loc, "&&", e, self._parse_cmp())
        return e

    def _parse_cmp(self) -> ast.Expr:
        e = self._parse_add()
        if self.tok.kind == "sym" and self.tok.text in CMP_OPS:
            loc = self.tok.loc
            op = self.next().text
            # Non-associative: a < b < c is a parse error at the second <.
            return ast.Binop(loc, op, e, self._parse_add())
        return e

    def _parse_add(self) -> ast.Expr:
        e = self._parse_mul()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            loc = self.tok.loc
            op = self.next().text
            e = ast.Binop(loc, op, e, self._parse_mul())
        return e

    def _parse_mul(self) -> ast.Expr:
        e = self._parse_postfix()
        while self.tok.kind == "sym" and self.tok.text in ("*", "/", "%"):
            loc = self.tok.loc
            op = self.next().text
            e = ast.Binop(loc, op, e, self._parse_postfix())
        return e

    def _parse_postfix(self) -> ast.Expr:
        e = self._parse_primary()
        while True:
            if self.at("sym", "("):
                loc = self.next().loc
                args = self._parse_args(")")
                e = ast.Call(loc, e, args)
            elif self.at("sym", "["):
                loc = self.next().loc
                idx = self.parse_seq((("sym", "]"),))
                self.expect("sym", "]")
                e = ast.Elem(loc, e, idx)
            else:
                return e

    def _parse_args(self, closer) -> list[ast.Expr]:
        args = []
        while not self.at("sym", closer):
            args.append(self.parse_expr())
            if self.at("sym", ","):
                self.next()
            elif not self.at("sym", closer):
                raise ParseError(f"expected ',' or {closer!r}, found "
                                 f"{self.tok.text!r}", self.tok.loc)
        self.expect("sym", closer)
        return args

    def _parse_primary(self) -> ast.Expr:
        t = self.tok
        if t.kind == "num":
            self.next()
            return ast.Const(t.loc, t.value)
        if t.kind == "char":
            self.next()
            return ast.Const(t.loc, t.value)
        if t.kind == "str":
            self.next()
            return ast.Str(t.loc, t.value)
        if t.kind == "id":
            if t.text == "_":
                raise ParseError("wildcard is only meaningful in patterns",
                                 t.loc)
            self.next()
            return ast.Var(t.loc, t.text)
        if t.kind == "uid":
            self.next()
            elems = []
            if self.at("sym", "("):
                self.next()
                elems = self._parse_args(")")
            return ast.Sexp(t.loc, t.text, elems)
        if t.kind == "sym" and t.text == "(":
            self.next()
            inner = self.parse_scope(("sym", ")"))
            self.expect("sym", ")")
            return inner
        if t.kind == "sym" and t.text == "[":
            self.next()
            elems = self._parse_args("]")
            return ast.ArrayLit(t.loc, elems)
        if t.kind == "kw":
            return self._parse_keyword_form()
        raise ParseError(f"unexpected {t.text!r}", t.loc)

    def _parse_keyword_form(self) -> ast.Expr:
        t = self.tok
        word = t.text
        if word == "skip":
            self.next()
            return ast.Skip(t.loc)
        if word == "read":
            self.next()
            self.expect("sym", "(")
            name = self.expect("id")
            self.expect("sym", ")")
            return ast.Read(t.loc, name.text)
        if word == "write":
            self.next()
            self.expect("sym", "(")
            e = self.parse_seq((("sym", ")"),))
            self.expect("sym", ")")
            return ast.Write(t.loc, e)
        if word == "if":
            self.next()
            return self._parse_if_tail(t.loc)
        if word == "while":
            self.next()
            cond = self.parse_seq((("kw", "do"),))
            self.expect("kw", "do")
            body = self.parse_scope(("kw", "od"))
            self.expect("kw", "od")
            return ast.While(t.loc, cond, body)
        if word == "do":
            self.next()
            body = self.parse_scope(("kw", "while"))
            self.expect("kw", "while")
            cond = self.parse_seq((("kw", "od"),))
            self.expect("kw", "od")
            return ast.DoWhile(t.loc, body, cond)
        if word == "for":
            self.next()
            init = self.parse_seq((("sym", ","),))
            self.expect("sym", ",")
            cond = self.parse_seq((("sym", ","),))
            self.expect("sym", ",")
            step = self.parse_seq((("kw", "do"),))
            self.expect("kw", "do")
            body = self.parse_scope(("kw", "od"))
            self.expect("kw", "od")
            # for init, c, step do body od  ==>  init; while c do body; step od
            return ast.Seq(t.loc, init,
                           ast.While(t.loc, cond,
                                     ast.Seq(t.loc, body, step)))
        if word == "case":
            self.next()
            scrut = self.parse_seq((("kw", "of"),))
            self.expect("kw", "of")
            branches = [self._parse_branch()]
            while self.at("sym", "|"):
                self.next()
                branches.append(self._parse_branch())
            self.expect("kw", "esac")
            return self._desugar_case(t.loc, scrut, branches)
        if word == "fun":
            self.next()
            params = self._parse_params()
            body = self._parse_block()
            return ast.Lambda(t.loc, params, body)
        raise ParseError(f"unexpected {word!r}", t.loc)

    def _parse_if_tail(self, loc: Loc) -> ast.Expr:
        cond = self.parse_seq((("kw", "then"),))
        self.expect("kw", "then")
        then = self.parse_scope(("kw", "elif"), ("kw", "else"), ("kw", "fi"))
        if self.at_kw("elif"):
            t = self.next()
            otherwise = self._parse_if_tail(t.loc)
            return ast.If(loc, cond, then, otherwise)
        if self.at_kw("else"):
            self.next()
            otherwise = self.parse_scope(("kw", "fi"))
            self.expect("kw", "fi")
            return ast.If(loc, cond, then, otherwise)
        fi = self.expect("kw", "fi")
        return ast.If(loc, cond, then, ast.Skip(fi.loc))

    # -- patterns ----------------------------------------------------------

    def _parse_branch(self) -> ast.CaseBranch:
        loc = self.tok.loc
        pat = self._parse_pattern()
        self.expect("sym", "->")
        body = self.parse_scope(("sym", "|"), ("kw", "esac"))
        return ast.CaseBranch(loc, pat, body)

    def _parse_pattern(self) -> ast.Pattern:
        t = self.tok
        if t.kind == "num" or t.kind == "char":
            self.next()
            return ast.PConst(t.loc, t.value)
        if t.kind == "id":
            self.next()
            if t.text == "_":
                return ast.PWild(t.loc)
            return ast.PBind(t.loc, t.text)
        if t.kind == "uid":
            self.next()
            subs = []
            if self.at("sym", "("):
                self.next()
                while not self.at("sym", ")"):
                    subs.append(self._parse_pattern())
                    if self.at("sym", ","):
                        self.next()
                self.expect("sym", ")")
            return ast.PSexp(t.loc, t.text, subs)
        if t.kind == "sym" and t.text == "[":
            self.next()
            subs = []
            while not self.at("sym", "]"):
                subs.append(self._parse_pattern())
                if self.at("sym", ","):
                    self.next()
            self.expect("sym", "]")
            return ast.PArray(t.loc, subs)
        raise ParseError(f"expected a pattern, found {t.text!r}", t.loc)

    # -- case desugaring ---------------------------------------------------

    def _desugar_case(self, loc, scrut, branches) -> ast.Expr:
        if isinstance(scrut, ast.Var):
            sname = scrut.name
            bind_scrut = None
        else:
            sname = self.names.fresh()
            bind_scrut = ast.ValDef(scrut.loc, sname, scrut)

        out = []
        for br in branches:
            binds = []
            pat = _strip_binders(br.pattern, (), binds)
            seen = set()
            for name, _path, bloc in binds:
                if name in seen:
                    raise ParseError(f"duplicate binder {name!r} in pattern",
                                     bloc)
                seen.add(name)
            body = br.body
            if binds:
                defs = []
                for name, path, bloc in binds:
                    e = ast.Var(bloc, sname)
                    for idx in path:
                        e = ast.Elem(bloc, e, ast.Const(bloc, idx))
                    defs.append(ast.ValDef(bloc, name, e))
                body = ast.Scope(br.body.loc, defs, body)
            out.append(ast.CaseBranch(br.loc, pat, body))

        case = ast.Case(loc, ast.Var(scrut.loc, sname), out)
        if bind_scrut is None:
            return case
        return ast.Scope(loc, [bind_scrut], case)


def _strip_binders(p: ast.Pattern, path, binds) -> ast.Pattern:
    match p:
        case ast.PBind(loc=loc, name=name):
            binds.append((name, path, loc))
            return ast.PWild(loc)
        case ast.PSexp(loc=loc, tag=tag, subs=subs):
            return ast.PSexp(loc, tag, [
                _strip_binders(s, path + (i,), binds)
                for i, s in enumerate(subs)])
        case ast.PArray(loc=loc, subs=subs):
            return ast.PArray(loc, [
                _strip_binders(s, path + (i,), binds)
                for i, s in enumerate(subs)])
    return p


def parse_program(text: str) -> ast.Program:
    return Parser(tokenize(text)).parse_program()
