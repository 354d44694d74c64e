"""Grammar-based source parsing into abstract syntax trees.

Two built-in grammars:

* ``toy`` — a deliberately small assignment/expression language used for
  hermetic tests and synthetic corpora.
* ``java`` — a recursive-descent parser for the Java subset that method-level
  snippets are written in (declarations, control flow, expressions, calls).

Every consumed token becomes a leaf node, so the tree is lossless over the
non-whitespace source. Interior nodes carry their grammar-rule name as label;
leaves carry the source text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, ParseError


@dataclass
class AstNode:
    index: int
    kind: str
    label: str
    span: tuple[int, int]


@dataclass
class Ast:
    nodes: list[AstNode] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    root: int = 0
    source: str = ""
    _children: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def add(self, kind: str, label: str, span: tuple[int, int], parent: int | None) -> int:
        idx = len(self.nodes)
        self.nodes.append(AstNode(idx, kind, label, span))
        self._children[idx] = []
        if parent is not None:
            self.edges.append((parent, idx))
            self._children[parent].append(idx)
        return idx

    def children(self, idx: int) -> list[int]:
        return self._children.get(idx, [])

    def is_leaf(self, idx: int) -> bool:
        return not self._children.get(idx)

    def leaves(self) -> list[int]:
        """Leaf indices in source (depth-first) order."""
        if not self.children(self.root):
            return []  # empty program: a bare root is not a token
        out: list[int] = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            kids = self.children(n)
            if kids:
                stack.extend(reversed(kids))
            else:
                out.append(n)
        return out


# ---------------------------------------------------------------------------
# Lexer

IDENT, NUMBER, STRING, CHAR, OP, EOF = "ident", "number", "string", "char", "op", "eof"

_JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while var true false null
    """.split()
)

_MULTI_OPS = (
    ">>>=", "<<=", ">>=", ">>>", "...", "==", "!=", "<=", ">=", "&&", "||",
    "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "->", "::",
    "<<", ">>",
)


@dataclass
class Token:
    type: str
    text: str
    start: int
    end: int
    line: int
    col: int


def _lex(source: str, multi_ops: bool) -> list[Token]:
    toks: list[Token] = []
    i, n = 0, len(source)
    line, col = 1, 1

    def advance(k: int):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch.isspace():
            advance(1)
            continue
        if multi_ops and source.startswith("//", i):
            j = source.find("\n", i)
            advance((j if j != -1 else n) - i)
            continue
        if multi_ops and source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j == -1:
                raise ParseError("unterminated block comment", line, col)
            advance(j + 2 - i)
            continue
        start, sline, scol = i, line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            toks.append(Token(IDENT, source[i:j], i, j, sline, scol))
            advance(j - i)
            continue
        if ch.isdigit():
            j = i
            while j < n:
                c = source[j]
                if c.isalnum() or c == "_":
                    j += 1
                elif c == "." and j + 1 < n and source[j + 1].isdigit():
                    j += 1
                elif c in "+-" and j > i and source[j - 1] in "eE":
                    j += 1
                else:
                    break
            toks.append(Token(NUMBER, source[i:j], i, j, sline, scol))
            advance(j - i)
            continue
        if ch in "\"'":
            quote = ch
            j = i + 1
            while j < n and source[j] != quote:
                j += 2 if source[j] == "\\" else 1
            if j >= n:
                raise ParseError("unterminated literal", sline, scol)
            kind = STRING if quote == '"' else CHAR
            toks.append(Token(kind, source[i : j + 1], i, j + 1, sline, scol))
            advance(j + 1 - i)
            continue
        if multi_ops:
            for op in _MULTI_OPS:
                if source.startswith(op, i):
                    toks.append(Token(OP, op, i, i + len(op), sline, scol))
                    advance(len(op))
                    break
            else:
                toks.append(Token(OP, ch, i, i + 1, sline, scol))
                advance(1)
            continue
        toks.append(Token(OP, ch, i, i + 1, sline, scol))
        advance(1)
    toks.append(Token(EOF, "", n, n, line, col))
    return toks


class _ParserBase:
    def __init__(self, source: str, multi_ops: bool):
        self.src = source
        self.toks = _lex(source, multi_ops)
        self.pos = 0
        self.ast = Ast(source=source)

    # -- token stream -------------------------------------------------------
    def peek(self, offset: int = 0) -> Token:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.type in (OP, IDENT) and t.text == text

    def take(self) -> Token:
        t = self.toks[self.pos]
        if t.type != EOF:
            self.pos += 1
        return t

    def error(self, msg: str) -> ParseError:
        t = self.peek()
        shown = t.text if t.type != EOF else "end of input"
        return ParseError(f"{msg}, got {shown!r}", t.line, t.col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.take()

    # -- node construction ---------------------------------------------------
    def node(self, kind: str, parent: int | None) -> int:
        t = self.peek()
        return self.ast.add(kind, kind, (t.start, t.start), parent)

    def leaf(self, parent: int, kind: str | None = None) -> int:
        t = self.take()
        if kind is None:
            kind = {IDENT: "identifier", NUMBER: "number_literal",
                    STRING: "string_literal", CHAR: "character_literal"}.get(t.type, "operator")
        return self.ast.add(kind, t.text, (t.start, t.end), parent)

    def close(self, idx: int):
        # extend the node's span to cover everything consumed under it
        end = self.toks[self.pos - 1].end if self.pos else 0
        node = self.ast.nodes[idx]
        node.span = (node.span[0], max(node.span[0], end))


# ---------------------------------------------------------------------------
# Toy grammar:  program := stmt (';' stmt?)* ; stmt := IDENT '=' expr | expr

class ToyParser(_ParserBase):
    def __init__(self, source: str):
        super().__init__(source, multi_ops=False)

    def parse(self) -> Ast:
        root = self.node("program", None)
        self.ast.root = root
        while self.peek().type != EOF:
            if self.at(";"):
                self.leaf(root)
                continue
            self.statement(root)
        self.close(root)
        return self.ast

    def statement(self, parent: int):
        if self.peek().type == IDENT and self.peek(1).text == "=" and self.peek(1).type == OP:
            n = self.node("assignment", parent)
            self.leaf(n)          # target identifier
            self.leaf(n)          # '='
            self.expr(n)
            self.close(n)
        else:
            self.expr(parent)

    def expr(self, parent: int) -> int:
        # left-associative binary chain over + - * /
        idx = self.term(parent)
        while self.peek().type == OP and self.peek().text in "+-*/":
            # the chain head becomes the left operand of a fresh binary node
            n = self.ast.add("binary_expression", "binary_expression",
                             (self.ast.nodes[idx].span[0], 0), parent)
            self._adopt(n, idx, parent)
            self.leaf(n)  # operator
            self.term(n)
            self.close(n)
            idx = n
        return idx

    def _adopt(self, new_parent: int, child_root: int, old_parent: int):
        self.ast._children[old_parent].remove(child_root)
        self.ast.edges = [(p, c) for (p, c) in self.ast.edges if not (p == old_parent and c == child_root)]
        self.ast.edges.append((new_parent, child_root))
        self.ast._children[new_parent].append(child_root)

    def term(self, parent: int) -> int:
        t = self.peek()
        if t.type == IDENT:
            if self.peek(1).text == "(" :
                n = self.node("call_expression", parent)
                self.leaf(n)
                self.leaf(n)  # '('
                while not self.at(")") and self.peek().type != EOF:
                    self.expr(n)
                    if self.at(","):
                        self.leaf(n)
                self.expect(")")
                self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
                self.close(n)
                return n
            return self.leaf(parent)
        if t.type in (NUMBER, STRING):
            return self.leaf(parent)
        if self.at("("):
            n = self.node("paren_expression", parent)
            self.leaf(n)
            self.expr(n)
            if not self.at(")"):
                raise self.error("expected ')'")
            self.leaf(n)
            self.close(n)
            return n
        raise self.error("expected an expression")


# ---------------------------------------------------------------------------
# Java subset

_PRIMITIVES = frozenset("boolean byte char short int long float double void var".split())
_MODIFIERS = frozenset("public private protected static final abstract native synchronized transient volatile strictfp default".split())


class JavaParser(_ParserBase):
    def __init__(self, source: str):
        super().__init__(source, multi_ops=True)

    def parse(self) -> Ast:
        root = self.node("program", None)
        self.ast.root = root
        while self.peek().type != EOF:
            self.top_level(root)
        self.close(root)
        return self.ast

    # -- declarations ---------------------------------------------------------
    def top_level(self, parent: int):
        nxt = self._peek_past_modifiers()
        if nxt in ("class", "interface", "enum"):
            self.class_declaration(parent)
        elif self.at("import") or self.at("package"):
            self.import_declaration(parent)
        elif self._looks_like_method():
            self.method_declaration(parent)
        elif self._looks_like_constructor():
            self.constructor_declaration(parent)
        elif self._is_modifier():
            # a member field: modifiers handled inside the declaration
            self.local_declaration(parent, expect_semi=True)
        else:
            self.statement(parent)

    def import_declaration(self, parent: int):
        n = self.node("import_declaration", parent)
        self.leaf(n, "keyword")
        while not self.at(";") and self.peek().type != EOF:
            self.leaf(n, "keyword" if self.peek().text == "static" else None)
        self.expect(";")
        self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def _is_modifier(self, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t.type == IDENT and t.text in _MODIFIERS

    def _peek_past_modifiers(self) -> str:
        off = 0
        while self._is_modifier(off):
            off += 1
        return self.peek(off).text

    def class_declaration(self, parent: int):
        n = self.node("class_declaration", parent)
        while self._is_modifier():
            self.leaf(n, "keyword")
        self.leaf(n, "keyword")  # class/interface/enum
        if self.peek().type == IDENT:
            self.leaf(n)
        while not self.at("{") and self.peek().type != EOF:
            self.leaf(n, "keyword" if self.peek().text in _JAVA_KEYWORDS else None)
        self.expect("{")
        self.ast.add("operator", "{", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        while not self.at("}") and self.peek().type != EOF:
            self.top_level(n)
        self.expect("}")
        self.ast.add("operator", "}", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def _scan_type(self, off: int) -> int | None:
        """Return the offset just past a type starting at ``off``, else None."""
        t = self.peek(off)
        if t.type != IDENT:
            return None
        if t.text in _JAVA_KEYWORDS and t.text not in _PRIMITIVES:
            return None
        off += 1
        while self.peek(off).text == "." and self.peek(off + 1).type == IDENT:
            off += 2
        if self.peek(off).text == "<":  # balanced generic arguments
            depth, off = 1, off + 1
            while depth:
                txt = self.peek(off).text
                if self.peek(off).type == EOF:
                    return None
                if txt == "<":
                    depth += 1
                elif txt == ">":
                    depth -= 1
                elif txt == ">>":
                    depth -= 2
                elif txt not in (",", ".", "?", "[", "]") and self.peek(off).type != IDENT:
                    return None
                off += 1
        while self.peek(off).text == "[" and self.peek(off + 1).text == "]":
            off += 2
        return off

    def _looks_like_method(self) -> bool:
        off = 0
        while self._is_modifier(off):
            off += 1
        past = self._scan_type(off)
        if past is None:
            return False
        return self.peek(past).type == IDENT and self.peek(past + 1).text == "("

    def _looks_like_constructor(self) -> bool:
        off = 0
        while self._is_modifier(off):
            off += 1
        t = self.peek(off)
        if t.type != IDENT or t.text in _JAVA_KEYWORDS or self.peek(off + 1).text != "(":
            return False
        depth, off = 1, off + 2
        while depth:
            tt = self.peek(off)
            if tt.type == EOF:
                return False
            if tt.text == "(":
                depth += 1
            elif tt.text == ")":
                depth -= 1
            off += 1
        return self.peek(off).text in ("{", "throws")

    def constructor_declaration(self, parent: int):
        n = self.node("constructor_declaration", parent)
        while self._is_modifier():
            self.leaf(n, "keyword")
        self.leaf(n)  # constructor name identifier
        self.formal_parameters(n)
        if self.at("throws"):
            self.leaf(n, "keyword")
            self.type_node(n)
            while self.at(","):
                self.leaf(n)
                self.type_node(n)
        self.block(n)
        self.close(n)

    def _looks_like_declaration(self) -> bool:
        off = 1 if self.at("final") else 0
        past = self._scan_type(off)
        if past is None:
            return False
        if self.peek(past).type != IDENT:
            return False
        nxt = self.peek(past + 1).text
        return nxt in ("=", ";", ",", "[", ":")

    def type_node(self, parent: int):
        n = self.node("type", parent)
        self.leaf(n, "keyword" if self.peek().text in _PRIMITIVES else "type_identifier")
        while self.at(".") and self.peek(1).type == IDENT:
            self.leaf(n)
            self.leaf(n, "type_identifier")
        if self.at("<"):
            depth = 0
            while True:
                txt = self.peek().text
                if txt == "<":
                    depth += 1
                elif txt == ">":
                    depth -= 1
                elif txt == ">>":
                    depth -= 2
                self.leaf(n, "type_identifier" if self.peek().type == IDENT else None)
                if depth <= 0:
                    break
        while self.at("[") and self.peek(1).text == "]":
            self.leaf(n)
            self.leaf(n)
        self.close(n)

    def method_declaration(self, parent: int):
        n = self.node("method_declaration", parent)
        while self._is_modifier():
            self.leaf(n, "keyword")
        self.type_node(n)
        self.leaf(n)  # method name identifier
        self.formal_parameters(n)
        if self.at("throws"):
            self.leaf(n, "keyword")
            self.type_node(n)
            while self.at(","):
                self.leaf(n)
                self.type_node(n)
        if self.at(";"):
            self.leaf(n)
        else:
            self.block(n)
        self.close(n)

    def formal_parameters(self, parent: int):
        n = self.node("formal_parameters", parent)
        self.expect("(")
        self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        while not self.at(")") and self.peek().type != EOF:
            p = self.node("parameter", n)
            if self.at("final"):
                self.leaf(p, "keyword")
            self.type_node(p)
            self.leaf(p)  # parameter name
            while self.at("[") and self.peek(1).text == "]":
                self.leaf(p)
                self.leaf(p)
            self.close(p)
            if self.at(","):
                self.leaf(n)
        self.expect(")")
        self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    # -- statements -----------------------------------------------------------
    def block(self, parent: int):
        n = self.node("block", parent)
        self.expect("{")
        self.ast.add("operator", "{", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        while not self.at("}") and self.peek().type != EOF:
            self.statement(n)
        self.expect("}")
        self.ast.add("operator", "}", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def statement(self, parent: int):
        t = self.peek()
        if t.text == "{":
            self.block(parent)
        elif t.text == "if":
            self.if_statement(parent)
        elif t.text == "while":
            self.while_statement(parent)
        elif t.text == "do":
            self.do_statement(parent)
        elif t.text == "for":
            self.for_statement(parent)
        elif t.text == "return":
            n = self.node("return_statement", parent)
            self.leaf(n, "keyword")
            if not self.at(";"):
                self.expression(n)
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.close(n)
        elif t.text in ("break", "continue"):
            n = self.node(f"{t.text}_statement", parent)
            self.leaf(n, "keyword")
            if self.peek().type == IDENT and self.peek().text not in _JAVA_KEYWORDS:
                self.leaf(n)
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.close(n)
        elif t.text == "throw":
            n = self.node("throw_statement", parent)
            self.leaf(n, "keyword")
            self.expression(n)
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.close(n)
        elif t.text == "try":
            self.try_statement(parent)
        elif t.text == ";":
            self.leaf(parent)
        elif t.text == "final" or t.text in _PRIMITIVES or self._looks_like_declaration():
            self.local_declaration(parent, expect_semi=True)
        else:
            n = self.node("expression_statement", parent)
            self.expression(n)
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.close(n)

    def local_declaration(self, parent: int, expect_semi: bool):
        n = self.node("local_variable_declaration", parent)
        while self._is_modifier():
            self.leaf(n, "keyword")
        self.type_node(n)
        while True:
            d = self.node("variable_declarator", n)
            self.leaf(d)  # variable name
            while self.at("[") and self.peek(1).text == "]":
                self.leaf(d)
                self.leaf(d)
            if self.at("="):
                self.leaf(d)
                if self.at("{"):
                    self.array_initializer(d)
                else:
                    self.expression(d)
            self.close(d)
            if self.at(","):
                self.leaf(n)
                continue
            break
        if expect_semi:
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def array_initializer(self, parent: int):
        n = self.node("array_initializer", parent)
        self.expect("{")
        self.ast.add("operator", "{", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        while not self.at("}") and self.peek().type != EOF:
            if self.at("{"):
                self.array_initializer(n)
            else:
                self.expression(n)
            if self.at(","):
                self.leaf(n)
        self.expect("}")
        self.ast.add("operator", "}", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def if_statement(self, parent: int):
        n = self.node("if_statement", parent)
        self.leaf(n, "keyword")
        self.expect("(")
        self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.expression(n)
        self.expect(")")
        self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.statement(n)
        if self.at("else"):
            self.leaf(n, "keyword")
            self.statement(n)
        self.close(n)

    def while_statement(self, parent: int):
        n = self.node("while_statement", parent)
        self.leaf(n, "keyword")
        self.expect("(")
        self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.expression(n)
        self.expect(")")
        self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.statement(n)
        self.close(n)

    def do_statement(self, parent: int):
        n = self.node("do_statement", parent)
        self.leaf(n, "keyword")
        self.statement(n)
        if self.at("while"):
            self.leaf(n, "keyword")
            self.expect("(")
            self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.expression(n)
            self.expect(")")
            self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.expect(";")
        self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def for_statement(self, parent: int):
        n = self.node("for_statement", parent)
        self.leaf(n, "keyword")
        self.expect("(")
        self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        # enhanced for: (type ident : expr)
        save = self.pos
        enhanced = False
        if self.at("final") or self._looks_like_declaration():
            off = (1 if self.at("final") else 0)
            past = self._scan_type(off)
            if past is not None and self.peek(past).type == IDENT and self.peek(past + 1).text == ":":
                enhanced = True
        self.pos = save
        if enhanced:
            self.local_declaration(n, expect_semi=False)
            self.expect(":")
            self.ast.add("operator", ":", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.expression(n)
        else:
            if self.at(";"):
                self.leaf(n)
            elif self.at("final") or self.peek().text in _PRIMITIVES or self._looks_like_declaration():
                self.local_declaration(n, expect_semi=True)
            else:
                self.expression(n)
                self.expect(";")
                self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            if not self.at(";"):
                self.expression(n)
            self.expect(";")
            self.ast.add("operator", ";", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            if not self.at(")"):
                self.expression(n)
                while self.at(","):
                    self.leaf(n)
                    self.expression(n)
        self.expect(")")
        self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.statement(n)
        self.close(n)

    def try_statement(self, parent: int):
        n = self.node("try_statement", parent)
        self.leaf(n, "keyword")
        self.block(n)
        while self.at("catch"):
            c = self.node("catch_clause", n)
            self.leaf(c, "keyword")
            self.expect("(")
            self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), c)
            p = self.node("parameter", c)
            self.type_node(p)
            while self.at("|"):
                self.leaf(p)
                self.type_node(p)
            self.leaf(p)
            self.close(p)
            self.expect(")")
            self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), c)
            self.block(c)
            self.close(c)
        if self.at("finally"):
            self.leaf(n, "keyword")
            self.block(n)
        self.close(n)

    # -- expressions ----------------------------------------------------------
    def expression(self, parent: int) -> int:
        return self._assignment(parent)

    def _binary_chain(self, parent: int, ops: tuple[str, ...], sub) -> int:
        first = len(self.ast.nodes)
        idx = sub(parent)
        while self.peek().type == OP and self.peek().text in ops:
            n = self.ast.add("binary_expression", "binary_expression",
                             (self.ast.nodes[first].span[0], 0), parent)
            self._adopt(n, idx, parent)
            self.leaf(n)
            sub(n)
            self.close(n)
            idx = n
        return idx

    def _adopt(self, new_parent: int, child_root: int, old_parent: int):
        self.ast._children[old_parent].remove(child_root)
        self.ast.edges = [(p, c) for (p, c) in self.ast.edges if not (p == old_parent and c == child_root)]
        self.ast.edges.append((new_parent, child_root))
        self.ast._children[new_parent].append(child_root)

    _ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=")

    def _assignment(self, parent: int) -> int:
        idx = self._ternary(parent)
        if self.peek().type == OP and self.peek().text in self._ASSIGN_OPS:
            n = self.ast.add("assignment_expression", "assignment_expression",
                             (self.ast.nodes[idx].span[0], 0), parent)
            self._adopt(n, idx, parent)
            self.leaf(n)
            self._assignment(n)
            self.close(n)
            return n
        return idx

    def _ternary(self, parent: int) -> int:
        idx = self._logic_or(parent)
        if self.at("?"):
            n = self.ast.add("ternary_expression", "ternary_expression",
                             (self.ast.nodes[idx].span[0], 0), parent)
            self._adopt(n, idx, parent)
            self.leaf(n)
            self.expression(n)
            self.expect(":")
            self.ast.add("operator", ":", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self._ternary(n)
            self.close(n)
            return n
        return idx

    def _logic_or(self, parent):
        return self._binary_chain(parent, ("||",), self._logic_and)

    def _logic_and(self, parent):
        return self._binary_chain(parent, ("&&",), self._bit_or)

    def _bit_or(self, parent):
        return self._binary_chain(parent, ("|",), self._bit_xor)

    def _bit_xor(self, parent):
        return self._binary_chain(parent, ("^",), self._bit_and)

    def _bit_and(self, parent):
        return self._binary_chain(parent, ("&",), self._equality)

    def _equality(self, parent):
        return self._binary_chain(parent, ("==", "!="), self._relational)

    def _relational(self, parent: int) -> int:
        first = len(self.ast.nodes)
        idx = self._shift(parent)
        while (self.peek().type == OP and self.peek().text in ("<", ">", "<=", ">=")) or self.at("instanceof"):
            n = self.ast.add("binary_expression", "binary_expression",
                             (self.ast.nodes[first].span[0], 0), parent)
            self._adopt(n, idx, parent)
            if self.at("instanceof"):
                self.leaf(n, "keyword")
                self.type_node(n)
            else:
                self.leaf(n)
                self._shift(n)
            self.close(n)
            idx = n
        return idx

    def _shift(self, parent):
        return self._binary_chain(parent, ("<<", ">>", ">>>"), self._additive)

    def _additive(self, parent):
        return self._binary_chain(parent, ("+", "-"), self._multiplicative)

    def _multiplicative(self, parent):
        return self._binary_chain(parent, ("*", "/", "%"), self._unary)

    def _unary(self, parent: int) -> int:
        t = self.peek()
        if t.type == OP and t.text in ("!", "-", "+", "~", "++", "--"):
            kind = "update_expression" if t.text in ("++", "--") else "unary_expression"
            n = self.node(kind, parent)
            self.leaf(n)
            self._unary(n)
            self.close(n)
            return n
        return self._postfix(parent)

    def _postfix(self, parent: int) -> int:
        idx = self._primary(parent)
        while True:
            t = self.peek()
            if t.text == "." and self.peek(1).type == IDENT:
                if self.peek(2).text == "(":
                    n = self.ast.add("method_invocation", "method_invocation",
                                     (self.ast.nodes[idx].span[0], 0), parent)
                    self._adopt(n, idx, parent)
                    self.leaf(n)   # '.'
                    self.leaf(n)   # method name
                    self._arguments(n)
                else:
                    n = self.ast.add("field_access", "field_access",
                                     (self.ast.nodes[idx].span[0], 0), parent)
                    self._adopt(n, idx, parent)
                    self.leaf(n)
                    self.leaf(n)
                self.close(n)
                idx = n
            elif t.text == "(" and self.ast.nodes[idx].kind == "identifier":
                n = self.ast.add("method_invocation", "method_invocation",
                                 (self.ast.nodes[idx].span[0], 0), parent)
                self._adopt(n, idx, parent)
                self._arguments(n)
                self.close(n)
                idx = n
            elif t.text == "[":
                n = self.ast.add("array_access", "array_access",
                                 (self.ast.nodes[idx].span[0], 0), parent)
                self._adopt(n, idx, parent)
                self.leaf(n)
                self.expression(n)
                self.expect("]")
                self.ast.add("operator", "]", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
                self.close(n)
                idx = n
            elif t.text in ("++", "--"):
                n = self.ast.add("update_expression", "update_expression",
                                 (self.ast.nodes[idx].span[0], 0), parent)
                self._adopt(n, idx, parent)
                self.leaf(n)
                self.close(n)
                idx = n
            else:
                return idx

    def _arguments(self, parent: int):
        n = self.node("argument_list", parent)
        self.expect("(")
        self.ast.add("operator", "(", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        while not self.at(")") and self.peek().type != EOF:
            self.expression(n)
            if self.at(","):
                self.leaf(n)
        self.expect(")")
        self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
        self.close(n)

    def _primary(self, parent: int) -> int:
        t = self.peek()
        if t.type == NUMBER:
            return self.leaf(parent)
        if t.type == STRING:
            return self.leaf(parent)
        if t.type == CHAR:
            return self.leaf(parent)
        if t.text in ("true", "false"):
            return self.leaf(parent, "boolean_literal")
        if t.text == "null":
            return self.leaf(parent, "null_literal")
        if t.text == "this" or t.text == "super":
            return self.leaf(parent, "keyword")
        if t.text == "new":
            n = self.node("object_creation", parent)
            self.leaf(n, "keyword")
            self.type_node(n)
            if self.at("("):
                self._arguments(n)
            else:
                while self.at("["):
                    self.leaf(n)
                    if not self.at("]"):
                        self.expression(n)
                    self.expect("]")
                    self.ast.add("operator", "]", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
                if self.at("{"):
                    self.array_initializer(n)
            self.close(n)
            return n
        if t.type == IDENT and t.text not in _JAVA_KEYWORDS:
            return self.leaf(parent)
        if t.text == "(" and self.peek(1).text in _PRIMITIVES:
            n = self.node("cast_expression", parent)
            self.leaf(n)
            self.type_node(n)
            self.expect(")")
            self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self._unary(n)
            self.close(n)
            return n
        if t.text == "(":
            n = self.node("parenthesized_expression", parent)
            self.leaf(n)
            self.expression(n)
            self.expect(")")
            self.ast.add("operator", ")", (self.toks[self.pos - 1].start, self.toks[self.pos - 1].end), n)
            self.close(n)
            return n
        raise self.error("expected an expression")


SUPPORTED_LANGS = ("toy", "java")


def parse_ast(source: str, lang: str) -> Ast:
    """Parse source into an Ast. Supported language tags: 'toy', 'java'."""
    if lang == "toy":
        return ToyParser(source).parse()
    if lang == "java":
        return JavaParser(source).parse()
    raise ConfigError(f"unsupported language {lang!r}; supported: {', '.join(SUPPORTED_LANGS)}")
