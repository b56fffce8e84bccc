"""Tokenizer and the term sub-grammar shared by the protocol, property and scenario readers."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

from cipmc.terms import Binder, Enc, Identity, PrivKey, PubKey, Term, Tuple, Var, atom_for


class SyntaxErr(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # NAME, NUMBER, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<NAME>[A-Za-z][A-Za-z0-9]*'*)
  | (?P<NUMBER>[0-9]+)
  | (?P<OP>->|\|>|\^\+|\^-|∀|∃|¬|∧|∨|→|▷|[(){}\[\],;:._?+\-=])
    """,
    re.VERBOSE,
)

_UNICODE_OPS = {"∀": "forall", "∃": "exists", "¬": "not", "∧": "and", "∨": "or", "→": "->", "▷": "|>"}


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SyntaxErr(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tok_text = _UNICODE_OPS.get(chunk, chunk)
            tok_kind = "NAME" if tok_text in ("forall", "exists", "not", "and", "or") and chunk in _UNICODE_OPS else kind
            if tok_kind == "OP" and tok_text == "^+":
                tok_text = "+"
            elif tok_kind == "OP" and tok_text == "^-":
                tok_text = "-"
            out.append(Token(tok_kind, tok_text, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    out.append(Token("EOF", "", line, col))
    return out


class Lexer:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def peek_at(self, k: int) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek
        return tok.kind in ("OP", "NAME") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.next()

    def expect_name(self) -> Token:
        if self.peek.kind != "NAME":
            self.error("expected a name")
        return self.next()

    def expect_end(self) -> None:
        if self.peek.kind != "EOF":
            self.error("unexpected trailing input")

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek
        shown = tok.text or "end of input"
        raise SyntaxErr(f"{msg} (found {shown!r})", tok.line, tok.col)


Classifier = Callable[[str, object, Token], Term]


def _default_classifier(name: str, index, tok: Token) -> Term:
    return atom_for(name, index)


def _parse_index(lx: Lexer, allow_index_vars: bool):
    if lx.peek.text == "_" and lx.peek_at(1).kind == "NUMBER":
        lx.next()
        return int(lx.next().text)
    if allow_index_vars and lx.peek.text == "_" and lx.peek_at(1).kind == "NAME":
        lx.next()
        return lx.next().text
    if lx.at("["):
        lx.next()
        tok = lx.next()
        if tok.kind == "NUMBER":
            idx = int(tok.text)
        elif tok.kind == "NAME" and allow_index_vars:
            idx = tok.text
        else:
            lx.error("expected an index", tok)
        lx.expect("]")
        return idx
    return None


def _key_suffix(lx: Lexer, base: Term, tok: Token) -> Term:
    if lx.at("+") or lx.at("-"):
        if not isinstance(base, (Identity, Var)):
            lx.error("only identities have key pairs", tok)
        sign = lx.next().text
        return PubKey(base) if sign == "+" else PrivKey(base)
    return base


def parse_term_list(lx: Lexer, close: str, classify: Classifier, allow_index_vars: bool) -> list[Term]:
    items = [parse_term_expr(lx, classify, allow_index_vars)]
    while lx.accept(","):
        items.append(parse_term_expr(lx, classify, allow_index_vars))
    lx.expect(close)
    return items


def parse_term_expr(lx: Lexer, classify: Classifier | None = None, allow_index_vars: bool = False) -> Term:
    classify = classify or _default_classifier
    tok = lx.peek
    if lx.accept("?"):
        name = lx.expect_name().text
        idx = _parse_index(lx, allow_index_vars)
        return Binder(name, idx)
    if lx.accept("("):
        items = parse_term_list(lx, ")", classify, allow_index_vars)
        if len(items) == 1:
            return items[0]
        return Tuple(tuple(items))
    if lx.accept("{"):
        items = parse_term_list(lx, "}", classify, allow_index_vars)
        lx.expect("_")
        if lx.accept("{"):
            key = parse_term_expr(lx, classify, allow_index_vars)
            lx.expect("}")
        else:
            key_tok = lx.peek
            key = parse_term_expr(lx, classify, allow_index_vars)
            if isinstance(key, (Tuple, Enc, Binder)):
                lx.error("an encryption key must be a key", key_tok)
        payload = items[0] if len(items) == 1 else Tuple(tuple(items))
        return Enc(payload, key)
    if tok.kind == "NAME":
        lx.next()
        idx = _parse_index(lx, allow_index_vars)
        base = classify(tok.text, idx, tok)
        return _key_suffix(lx, base, tok)
    lx.error("expected a term")
