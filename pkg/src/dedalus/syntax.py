"""Text syntax shared by plain Datalog programs and Dedalus programs.

Grammar (``%`` starts a line comment)::

    program  := rule*
    rule     := atom annot? ( "<-" body )? "."
    annot    := "@" ( "next" | VAR )
    body     := literal ( "," literal )*
    literal  := "not"? ( atom | term "<" term | term "!=" term )
    atom     := IDENT "(" ( term ( "," term )* )? ")"
    term     := VAR | IDENT | INT | STRING

Relation names and symbolic constants start lowercase, variables start
uppercase or with ``_``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .datalog import Atom, Program, Rule, UnsafeRuleError, Var

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<arrow><-)
  | (?P<neq>!=)
  | (?P<lt><)
  | (?P<punct>[(),.@])
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        self.line, self.col, self.reason = line, col, message
        super().__init__(f"line {line}, column {col}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


@dataclass(frozen=True)
class ParsedRule:
    """A rule as written, before any validation."""

    head: Atom
    pos: tuple
    neg: tuple
    annotation: str | Var | None
    line: int
    col: int


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def take(self, kind: str, text: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", t.line, t.col)
        self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        return self.tok.kind == kind and (text is None or self.tok.text == text)

    def program(self) -> list[ParsedRule]:
        rules = []
        while not self.at("eof"):
            rules.append(self.rule())
        return rules

    def rule(self) -> ParsedRule:
        start = self.tok
        head = self.atom()
        annotation = None
        if self.at("punct", "@"):
            self.i += 1
            if self.at("ident", "next"):
                self.i += 1
                annotation = "next"
            else:
                annotation = Var(self.take("var").text)
        pos, neg = [], []
        if self.at("arrow"):
            self.i += 1
            while True:
                negated = self.at("ident", "not")
                if negated:
                    self.i += 1
                (neg if negated else pos).append(self.literal())
                if self.at("punct", ","):
                    self.i += 1
                    continue
                break
        self.take("punct", ".")
        return ParsedRule(head, tuple(pos), tuple(neg), annotation, start.line, start.col)

    def literal(self) -> Atom:
        if self.at("ident") and self.tokens[self.i + 1].text == "(":
            return self.atom()
        left = self.term()
        if self.at("lt") or self.at("neq"):
            op = self.tok.text
            self.i += 1
            return Atom(op, (left, self.term()))
        t = self.tok
        raise ParseError("expected an atom or a comparison", t.line, t.col)

    def atom(self) -> Atom:
        name = self.take("ident")
        if name.text == "not":
            raise ParseError("'not' cannot be a relation name", name.line, name.col)
        self.take("punct", "(")
        args = []
        if not self.at("punct", ")"):
            args.append(self.term())
            while self.at("punct", ","):
                self.i += 1
                args.append(self.term())
        self.take("punct", ")")
        return Atom(name.text, tuple(args))

    def term(self):
        t = self.tok
        if t.kind == "var":
            self.i += 1
            return Var(t.text)
        if t.kind == "int":
            self.i += 1
            return int(t.text)
        if t.kind == "ident":
            self.i += 1
            return t.text
        if t.kind == "string":
            self.i += 1
            return re.sub(r"\\(.)", r"\1", t.text[1:-1])
        raise ParseError(f"expected a term, found {t.text or 'end of input'!r}", t.line, t.col)


def parse_rules(text: str) -> list[ParsedRule]:
    return _Parser(text).program()


def parse_program(text: str) -> Program:
    """Parse a plain Datalog program; head annotations are rejected."""
    rules = []
    for pr in parse_rules(text):
        if pr.annotation is not None:
            raise ParseError("annotations are not allowed in plain Datalog", pr.line, pr.col)
        try:
            rules.append(Rule(pr.head, pr.pos, pr.neg))
        except UnsafeRuleError as e:
            raise ParseError(str(e), pr.line, pr.col) from None
    return Program(tuple(rules))


def format_program(program: Program) -> str:
    return "".join(f"{r}\n" for r in program.rules)


__all__ = ["ParseError", "ParsedRule", "format_program", "parse_program", "parse_rules", "tokenize"]
