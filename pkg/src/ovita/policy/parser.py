"""Lexer and recursive-descent parser for the trajectory-policy language.

Grammar (EBNF, also published in the docs):

    program    = { statement } ;
    statement  = "let" IDENT "=" expr ";"
               | "for" IDENT "in" range "{" { statement } "}"
               | "if" expr "{" { statement } "}" [ "else" "{" { statement } "}" ]
               | expr ";" ;
    range      = additive ".." additive ;
    expr       = or_expr ;
    or_expr    = and_expr { "or" and_expr } ;
    and_expr   = not_expr { "and" not_expr } ;
    not_expr   = "not" not_expr | comparison ;
    comparison = additive [ ( "==" | "!=" | "<=" | ">=" | "<" | ">" ) additive ] ;
    additive   = multiplicative { ( "+" | "-" ) multiplicative } ;
    multiplicative = unary { ( "*" | "/" | "%" ) unary } ;
    unary      = "-" unary | postfix ;
    postfix    = primary { "[" expr "]" } ;
    primary    = NUMBER | STRING | "true" | "false"
               | IDENT [ "(" [ arg { "," arg } ] ")" ]
               | "[" [ expr { "," expr } ] "]"
               | "(" expr ")" ;
    arg        = IDENT "=" expr | expr ;

Comments run from "#" to end of line. Host-language constructs (import,
while, def, ...) are reserved everywhere and raise DisallowedConstruct.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import nodes as N
from .errors import DisallowedConstruct, PolicySyntaxError

__all__ = ["tokenize", "Parser", "parse_source"]

KEYWORDS = {"let", "for", "in", "if", "else", "true", "false", "and", "or", "not"}

# host-language constructs the sandbox refuses outright, wherever they appear
BANNED = {
    "import", "while", "def", "class", "lambda", "return", "yield",
    "global", "nonlocal", "try", "except", "raise", "with", "async",
    "await", "exec", "eval",
}

_TWO_CHAR = {"==", "!=", "<=", ">=", ".."}
_ONE_CHAR = set("()[]{},;=<>+-*/%")


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "str", "ident", "kw", or the operator text
    text: str
    value: object
    line: int
    col: int


def tokenize(source: str) -> list:
    tokens: list = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n:
                ch = source[j]
                if ch.isdigit():
                    j += 1
                elif ch == "." and not seen_dot and not seen_exp:
                    if source[j : j + 2] == "..":  # range operator, not a decimal
                        break
                    seen_dot = True
                    j += 1
                elif ch in "eE" and not seen_exp and j > i:
                    k = j + 1
                    if k < n and source[k] in "+-":
                        k += 1
                    if k < n and source[k].isdigit():
                        seen_exp = True
                        j = k
                    else:
                        break
                else:
                    break
            text = source[i:j]
            try:
                value = float(text)
            except ValueError:
                raise PolicySyntaxError(start_line, start_col, "number", text)
            tokens.append(Token("num", text, value, start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            if text in BANNED:
                raise DisallowedConstruct(text, start_line, start_col)
            kind = "kw" if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, text, start_line, start_col))
            col += j - i
            i = j
            continue
        if c == '"':
            j = i + 1
            out = []
            while j < n:
                ch = source[j]
                if ch == '"':
                    break
                if ch == "\n":
                    raise PolicySyntaxError(start_line, start_col, "closing quote", "newline")
                if ch == "\\":
                    if j + 1 >= n:
                        raise PolicySyntaxError(start_line, start_col, "escape character", "end of input")
                    esc = source[j + 1]
                    mapped = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}.get(esc)
                    if mapped is None:
                        raise PolicySyntaxError(line, col, "valid escape (\\\\ \\\" \\n \\t)", f"\\{esc}")
                    out.append(mapped)
                    j += 2
                else:
                    out.append(ch)
                    j += 1
            else:
                raise PolicySyntaxError(start_line, start_col, "closing quote", "end of input")
            tokens.append(Token("str", source[i : j + 1], "".join(out), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        two = source[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token(two, two, two, start_line, start_col))
            i += 2
            col += 2
            continue
        if c in _ONE_CHAR:
            tokens.append(Token(c, c, c, start_line, start_col))
            i += 1
            col += 1
            continue
        raise PolicySyntaxError(line, col, "a token", repr(c))
    tokens.append(Token("eof", "", None, line, col))
    return tokens


class Parser:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise PolicySyntaxError(tok.line, tok.col, what, tok.text or "end of input")
        return self.advance()

    def expect_kw(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "kw" or tok.text != word:
            raise PolicySyntaxError(tok.line, tok.col, f"'{word}'", tok.text or "end of input")
        return self.advance()

    def at_kw(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "kw" and tok.text == word

    # ---- statements

    def program(self) -> N.Program:
        stmts = []
        while self.peek().kind != "eof":
            stmts.append(self.statement())
        return N.Program(statements=tuple(stmts))

    def block(self) -> tuple:
        self.expect("{", "'{'")
        stmts = []
        while self.peek().kind != "}":
            if self.peek().kind == "eof":
                tok = self.peek()
                raise PolicySyntaxError(tok.line, tok.col, "'}'", "end of input")
            stmts.append(self.statement())
        self.advance()
        return tuple(stmts)

    def statement(self) -> N.Node:
        tok = self.peek()
        if self.at_kw("let"):
            self.advance()
            name = self.expect("ident", "a name")
            self.expect("=", "'='")
            value = self.expr()
            self.expect(";", "';'")
            return N.Let(name.text, value, line=tok.line, col=tok.col)
        if self.at_kw("for"):
            self.advance()
            var = self.expect("ident", "a loop variable")
            self.expect_kw("in")
            start = self.additive()
            self.expect("..", "'..'")
            end = self.additive()
            body = self.block()
            return N.For(var.text, start, end, body, line=tok.line, col=tok.col)
        if self.at_kw("if"):
            self.advance()
            cond = self.expr()
            then = self.block()
            orelse: tuple = ()
            if self.at_kw("else"):
                self.advance()
                orelse = self.block()
            return N.If(cond, then, orelse, line=tok.line, col=tok.col)
        expr = self.expr()
        self.expect(";", "';'")
        return N.ExprStmt(expr, line=tok.line, col=tok.col)

    # ---- expressions, one method per precedence level

    def expr(self) -> N.Node:
        return self.or_expr()

    def or_expr(self) -> N.Node:
        node = self.and_expr()
        while self.at_kw("or"):
            tok = self.advance()
            node = N.BinOp("or", node, self.and_expr(), line=tok.line, col=tok.col)
        return node

    def and_expr(self) -> N.Node:
        node = self.not_expr()
        while self.at_kw("and"):
            tok = self.advance()
            node = N.BinOp("and", node, self.not_expr(), line=tok.line, col=tok.col)
        return node

    def not_expr(self) -> N.Node:
        if self.at_kw("not"):
            tok = self.advance()
            return N.UnaryOp("not", self.not_expr(), line=tok.line, col=tok.col)
        return self.comparison()

    def comparison(self) -> N.Node:
        node = self.additive()
        tok = self.peek()
        if tok.kind in ("==", "!=", "<=", ">=", "<", ">"):
            self.advance()
            node = N.BinOp(tok.kind, node, self.additive(), line=tok.line, col=tok.col)
        return node

    def additive(self) -> N.Node:
        node = self.multiplicative()
        while self.peek().kind in ("+", "-"):
            tok = self.advance()
            node = N.BinOp(tok.kind, node, self.multiplicative(), line=tok.line, col=tok.col)
        return node

    def multiplicative(self) -> N.Node:
        node = self.unary()
        while self.peek().kind in ("*", "/", "%"):
            tok = self.advance()
            node = N.BinOp(tok.kind, node, self.unary(), line=tok.line, col=tok.col)
        return node

    def unary(self) -> N.Node:
        if self.peek().kind == "-":
            tok = self.advance()
            return N.UnaryOp("-", self.unary(), line=tok.line, col=tok.col)
        return self.postfix()

    def postfix(self) -> N.Node:
        node = self.primary()
        while self.peek().kind == "[":
            tok = self.advance()
            index = self.expr()
            self.expect("]", "']'")
            node = N.Index(node, index, line=tok.line, col=tok.col)
        return node

    def primary(self) -> N.Node:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return N.Number(tok.value, line=tok.line, col=tok.col)
        if tok.kind == "str":
            self.advance()
            return N.Str(tok.value, line=tok.line, col=tok.col)
        if self.at_kw("true") or self.at_kw("false"):
            self.advance()
            return N.Bool(tok.text == "true", line=tok.line, col=tok.col)
        if tok.kind == "ident":
            self.advance()
            if self.peek().kind == "(":
                return self.call(tok)
            return N.Var(tok.text, line=tok.line, col=tok.col)
        if tok.kind == "[":
            self.advance()
            items = []
            if self.peek().kind != "]":
                items.append(self.expr())
                while self.peek().kind == ",":
                    self.advance()
                    items.append(self.expr())
            self.expect("]", "']' or ','")
            return N.ListLit(tuple(items), line=tok.line, col=tok.col)
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")", "')'")
            return node
        raise PolicySyntaxError(tok.line, tok.col, "an expression", tok.text or "end of input")

    def call(self, name_tok: Token) -> N.Call:
        self.expect("(", "'('")
        args: list = []
        kwargs: list = []
        if self.peek().kind != ")":
            self._arg(args, kwargs)
            while self.peek().kind == ",":
                self.advance()
                self._arg(args, kwargs)
        self.expect(")", "')' or ','")
        return N.Call(
            name_tok.text, tuple(args), tuple(kwargs), line=name_tok.line, col=name_tok.col
        )

    def _arg(self, args: list, kwargs: list) -> None:
        tok = self.peek()
        if tok.kind == "ident" and self.tokens[self.pos + 1].kind == "=":
            self.advance()
            self.advance()
            kwargs.append((tok.text, self.expr()))
            return
        if kwargs:
            raise PolicySyntaxError(
                tok.line, tok.col, "keyword argument", "positional argument after keyword"
            )
        args.append(self.expr())


def parse_source(source: str) -> N.Program:
    return Parser(tokenize(source)).program()
