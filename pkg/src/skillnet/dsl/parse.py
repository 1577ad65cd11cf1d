"""Recursive-descent parser for skill sources."""
from __future__ import annotations

import re

from ..kinds import KINDS
from .ast import (
    Assert, BinOp, Call, Cap, Compare, DSLError, Func, If, InvAtLeast, InvCount,
    Kind, Let, Num, Param, Prim, Repeat, SkillProgram, StationPlaced, ToolTier,
    ToolTierAtLeast, Var,
)
from ..kinds import PRIMITIVES


class ParseError(DSLError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>>=|<=|==|!=|[<>(){},;:=+\-*/%])
""", re.VERBOSE)

RELATIONS = (">=", "<=", "==", "!=", ">", "<")
KEYWORDS = {"skill", "pre", "post", "call", "prim", "if", "else", "repeat", "let",
            "assert", "inv", "station", "tooltier", "cap", "min", "max"}


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            tokens.append((kind, value, line, pos - line_start + 1))
        for i, ch in enumerate(value):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        pos = m.end()
    tokens.append(("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, offset: int = 0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def error(self, message: str, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], tok[3])

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value and self.peek()[0] in ("op", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, value: str):
        tok = self.peek()
        if not self.accept(value):
            found = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}", tok)
        return tok

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok[0] != "ident":
            raise self.error(f"expected {what}, found {tok[1] or 'end of input'!r}", tok)
        self.i += 1
        return tok[1]

    # grammar
    def skill(self) -> SkillProgram:
        self.expect("skill")
        name = self.ident("skill name")
        self.expect("(")
        params = []
        if not self.accept(")"):
            while True:
                params.append(self.param())
                if self.accept(")"):
                    break
                self.expect(",")
        self.expect("pre")
        pre = self.cond_set()
        self.expect("post")
        post = self.cond_set()
        body = self.block()
        return SkillProgram(name, tuple(params), tuple(pre), tuple(post), body)

    def param(self) -> Param:
        tok = self.peek()
        name = self.ident("parameter name")
        self.expect(":")
        kind = self.ident("parameter kind")
        if kind not in ("int", "item", "station"):
            raise self.error(f"unknown parameter kind {kind!r}", tok)
        default = None
        if self.accept("="):
            t = self.peek()
            if t[0] == "int":
                default = int(t[1])
            elif t[0] == "ident":
                default = t[1]
            else:
                raise self.error("expected literal default")
            self.i += 1
        return Param(name, kind, default)

    def cond_set(self) -> list:
        self.expect("{")
        conds = []
        if not self.accept("}"):
            while True:
                conds.append(self.condition())
                if self.accept("}"):
                    break
                self.expect(",")
        return conds

    def block(self) -> tuple:
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            if self.peek()[0] == "eof":
                raise self.error("unterminated block")
            stmts.append(self.statement())
        return tuple(stmts)

    def statement(self):
        tok = self.peek()
        word = tok[1]
        if word in ("call", "prim") and tok[0] == "ident":
            self.i += 1
            name = self.ident("callee name")
            args = self.args()
            self.expect(";")
            if word == "prim":
                if name not in PRIMITIVES:
                    raise self.error(f"unknown primitive {name!r}", tok)
                return Prim(name, args)
            return Call(name, args)
        if word == "if":
            self.i += 1
            self.expect("(")
            cond = self.condition()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else ()
            return If(cond, then, orelse)
        if word == "repeat":
            self.i += 1
            self.expect("(")
            count = self.expr()
            self.expect(")")
            return Repeat(count, self.block())
        if word == "let":
            self.i += 1
            name = self.ident("variable name")
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Let(name, value)
        if word == "assert":
            self.i += 1
            self.expect("(")
            cond = self.condition()
            self.expect(")")
            self.expect(";")
            return Assert(cond)
        raise self.error(f"expected statement, found {word or 'end of input'!r}", tok)

    def args(self) -> tuple:
        self.expect("(")
        out = []
        if not self.accept(")"):
            while True:
                out.append(self.expr())
                if self.accept(")"):
                    break
                self.expect(",")
        return tuple(out)

    def condition(self):
        tok = self.peek()
        if tok[1] == "station" and self.peek(1)[1] == "(":
            self.i += 2
            kind = self.expr()
            self.expect(")")
            return StationPlaced(kind)
        left = self.expr()
        rel = self.peek()
        if rel[1] not in RELATIONS:
            raise self.error(f"expected relation, found {rel[1] or 'end of input'!r}", rel)
        self.i += 1
        right = self.expr()
        if rel[1] == ">=" and isinstance(left, InvCount):
            return InvAtLeast(left.item, right)
        if rel[1] == ">=" and isinstance(left, ToolTier) and isinstance(right, Num):
            return ToolTierAtLeast(right.value)
        return Compare(left, rel[1], right)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.peek()[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.atom()
        while self.peek()[1] in ("*", "/", "%") and self.peek()[0] == "op":
            op = self.peek()[1]
            self.i += 1
            node = BinOp(op, node, self.atom())
        return node

    def atom(self):
        tok = self.peek()
        if tok[0] == "int":
            self.i += 1
            return Num(int(tok[1]))
        if tok[1] == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok[0] == "ident":
            word = tok[1]
            self.i += 1
            if word in ("inv", "cap") and self.peek()[1] == "(":
                self.i += 1
                item = self.expr()
                self.expect(")")
                return InvCount(item) if word == "inv" else Cap(item)
            if word in ("min", "max") and self.peek()[1] == "(":
                return Func(word, self.args())
            if word == "tooltier":
                return ToolTier()
            if word in KEYWORDS:
                raise self.error(f"unexpected keyword {word!r}", tok)
            return Kind(word) if word in KINDS else Var(word)
        raise self.error(f"expected expression, found {tok[1] or 'end of input'!r}", tok)


def _finish(p: _Parser):
    if p.peek()[0] != "eof":
        raise p.error(f"unexpected trailing input {p.peek()[1]!r}")


def parse_skill(text: str, check: bool = True) -> SkillProgram:
    """Parse one skill definition; canonicalises atom order and checks well-formedness."""
    from .check import canonical, check_program

    p = _Parser(text)
    prog = p.skill()
    _finish(p)
    prog = canonical(prog)
    if check:
        check_program(prog)
    return prog


def parse_skills(text: str) -> list:
    """Parse a file holding any number of skill definitions."""
    from .check import canonical, check_program

    p = _Parser(text)
    out = []
    while p.peek()[0] != "eof":
        prog = canonical(p.skill())
        check_program(prog)
        out.append(prog)
    return out


def parse_statement(text: str):
    p = _Parser(text)
    stmt = p.statement()
    _finish(p)
    return stmt


def parse_condition(text: str):
    p = _Parser(text)
    cond = p.condition()
    _finish(p)
    return cond


def parse_condition_list(text: str) -> tuple:
    """Comma separated conditions, as used by curriculum and recipe files."""
    p = _Parser(text)
    conds = [p.condition()]
    while p.accept(","):
        conds.append(p.condition())
    _finish(p)
    return tuple(conds)


def parse_expr(text: str):
    p = _Parser(text)
    e = p.expr()
    _finish(p)
    return e
