"""Single-pass s-expression tokenizer shared by the HDDL and JSHOP readers."""
from __future__ import annotations

from .errors import ParseError


class Symbol(str):
    """An atom carrying its source position."""

    line: int
    column: int

    def __new__(cls, text, line=0, column=0):
        obj = super().__new__(cls, text)
        obj.line = line
        obj.column = column
        return obj


class SList(list):
    """A parenthesized group carrying the position of its opening parenthesis."""

    def __init__(self, items=(), line=0, column=0):
        super().__init__(items)
        self.line = line
        self.column = column


def tokenize(text: str, lowercase: bool = True) -> list:
    """Return the list of top-level forms in ``text``.

    ``;`` starts a comment running to the end of the line.  Atoms are
    lowercased unless told otherwise.
    """
    stack = [SList()]
    line, col = 1, 0
    i, n = 0, len(text)
    delimiters = "();"
    while i < n:
        c = text[i]
        if c == "\n":
            line, col = line + 1, 0
            i += 1
            continue
        col += 1
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(":
            stack.append(SList(line=line, column=col))
            i += 1
        elif c == ")":
            if len(stack) == 1:
                raise ParseError("unexpected ')'", line, col)
            group = stack.pop()
            stack[-1].append(group)
            i += 1
        else:
            start, start_col = i, col
            while i < n and not text[i].isspace() and text[i] not in delimiters:
                i += 1
            col = start_col + (i - start) - 1
            atom = text[start:i]
            stack[-1].append(Symbol(atom.lower() if lowercase else atom, line, start_col))
    if len(stack) > 1:
        group = stack[-1]
        raise ParseError("unbalanced '(' never closed", group.line, group.column)
    return stack[0]


def position(node) -> tuple:
    return getattr(node, "line", None), getattr(node, "column", None)
