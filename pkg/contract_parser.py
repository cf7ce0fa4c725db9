"""
Contract DSL Parser
Tokenizes and parses contracts written in the fuzzer's small storage-machine
language into an AST whose statements and conditions carry stable source
locations.

Grammar (informal):
    contract := "contract" IDENT "{" decl* fn* "}"
    decl     := "var" IDENT ("[" "]")? ("=" INT)? ";"
    fn       := "fn" IDENT "(" (IDENT ("," IDENT)*)? ")" block
              | "fn" "init" "(" ")" block
    cond     := expr CMP expr
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, NamedTuple, Optional, Set, Tuple, Union

from value_domain import fits_literal, wrap


# Token kinds
TOKEN_INT = "INT"
TOKEN_IDENT = "IDENT"
TOKEN_KEYWORD = "KEYWORD"
TOKEN_OP = "OP"
TOKEN_EOF = "EOF"

KEYWORDS = frozenset(
    {
        "contract", "var", "fn", "init", "let", "if", "else", "while",
        "return", "require", "assert", "push", "pop", "len", "halt", "sender",
    }
)

# Unsigned comparison operators must not run into an identifier ("a <u b" vs "a < ub").
_TOKEN_PATTERN = re.compile(
    r"""
      (?P<ws>[ \t\r\f]+)
    | (?P<newline>\n)
    | (?P<comment>//[^\n]*)
    | (?P<int>[0-9]+)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><=u(?![A-Za-z0-9_])|>=u(?![A-Za-z0-9_])|<u(?![A-Za-z0-9_])|>u(?![A-Za-z0-9_])
            |==|!=|<=|>=|[-+*/%<>=(){}\[\];,])
    """,
    re.VERBOSE,
)

ARITHMETIC_OPS = ("+", "-", "*", "/", "%")


class SourceLoc(NamedTuple):
    """Line and column (both 1-based) of a token in the contract source."""

    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"

    @classmethod
    def parse(cls, text: str) -> "SourceLoc":
        line, col = text.split(":")
        return cls(int(line), int(col))


class ContractError(Exception):
    """Base class for errors raised while reading a contract."""

    def __init__(self, message: str, loc: Optional[SourceLoc] = None):
        self.loc = loc
        self.message = message
        super().__init__(f"{loc}: {message}" if loc else message)


class ContractSyntaxError(ContractError):
    """Malformed source text."""


class ContractScopeError(ContractError):
    """Duplicate declaration, unknown name, or a name used with the wrong kind."""


class ComparisonOp(str, Enum):
    EQ = "=="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="


_COMPARISON_TOKENS: Dict[str, Tuple[ComparisonOp, bool]] = {
    "==": (ComparisonOp.EQ, False),
    "!=": (ComparisonOp.NE, False),
    "<": (ComparisonOp.LT, False),
    "<=": (ComparisonOp.LE, False),
    ">": (ComparisonOp.GT, False),
    ">=": (ComparisonOp.GE, False),
    "<u": (ComparisonOp.LT, True),
    "<=u": (ComparisonOp.LE, True),
    ">u": (ComparisonOp.GT, True),
    ">=u": (ComparisonOp.GE, True),
}


class DeclKind(str, Enum):
    SCALAR = "scalar"
    ARRAY = "array"


# --- Expressions ---


@dataclass(frozen=True, slots=True)
class IntLiteral:
    value: int
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class LocalVar:
    name: str
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class StorageVar:
    name: str
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class SenderExpr:
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class LengthExpr:
    array: str
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class ElementExpr:
    array: str
    index: "Expr"
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class NegateExpr:
    operand: "Expr"
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class BinaryExpr:
    op: str
    left: "Expr"
    right: "Expr"
    loc: SourceLoc  # operator token; checked errors are reported here


Expr = Union[IntLiteral, LocalVar, StorageVar, SenderExpr, LengthExpr, ElementExpr, NegateExpr, BinaryExpr]


@dataclass(frozen=True, slots=True)
class Condition:
    """A single comparison; the only form a branch condition may take."""

    op: ComparisonOp
    unsigned: bool
    left: Expr
    right: Expr
    loc: SourceLoc  # first token of the condition

    def render(self) -> str:
        return f"{self.op.value}{'u' if self.unsigned else ''}"


# --- Statements ---


@dataclass(frozen=True, slots=True)
class LetStmt:
    name: str
    value: Expr
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class AssignLocal:
    name: str
    value: Expr
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class StoreScalar:
    name: str
    value: Expr
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class StoreElement:
    array: str
    index: Expr
    value: Expr
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class PushStmt:
    array: str
    value: Expr
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class PopStmt:
    array: str
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class RequireStmt:
    cond: Condition
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class AssertStmt:
    cond: Condition
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class IfStmt:
    cond: Condition
    then_body: Tuple["Stmt", ...]
    else_body: Tuple["Stmt", ...]
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class WhileStmt:
    cond: Condition
    body: Tuple["Stmt", ...]
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class ReturnStmt:
    value: Optional[Expr]
    loc: SourceLoc


@dataclass(frozen=True, slots=True)
class HaltStmt:
    loc: SourceLoc


Stmt = Union[
    LetStmt, AssignLocal, StoreScalar, StoreElement, PushStmt, PopStmt,
    RequireStmt, AssertStmt, IfStmt, WhileStmt, ReturnStmt, HaltStmt,
]


# --- Declarations ---


@dataclass(frozen=True)
class PersistentDecl:
    name: str
    kind: DeclKind
    initializer: int = 0
    loc: SourceLoc = SourceLoc(0, 0)


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: Tuple[str, ...]
    body: Tuple[Stmt, ...]
    loc: SourceLoc

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass
class Contract:
    """A parsed contract with its storage layout."""

    name: str
    decls: Tuple[PersistentDecl, ...] = ()
    functions: Dict[str, FunctionDef] = field(default_factory=dict)
    init: Optional[FunctionDef] = None
    literals: FrozenSet[int] = frozenset()
    source: str = ""

    def __post_init__(self):
        # Each declaration takes the next slot; an array's slot holds its length.
        self.layout: Dict[str, int] = {decl.name: slot for slot, decl in enumerate(self.decls)}
        self._kinds: Dict[str, DeclKind] = {decl.name: decl.kind for decl in self.decls}

    @property
    def public_functions(self) -> List[FunctionDef]:
        return list(self.functions.values())

    @property
    def digest(self) -> str:
        return hashlib.blake2b(self.source.encode("utf-8"), digest_size=16).hexdigest()

    def slot_of(self, name: str) -> int:
        return self.layout[name]

    def kind_of(self, name: str) -> DeclKind:
        return self._kinds[name]

    def static_slots(self) -> Set[int]:
        """Slots assigned by the layout (scalars and array length slots)."""
        return set(self.layout.values())

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "decls": [{"name": d.name, "kind": d.kind.value, "slot": self.layout[d.name]} for d in self.decls],
            "functions": {f.name: list(f.params) for f in self.functions.values()},
            "hasInit": self.init is not None,
        }


class _Token(NamedTuple):
    kind: str
    text: str
    loc: SourceLoc


def tokenize(text: str) -> Iterator[_Token]:
    """Yield tokens with their source locations, ending with an EOF token."""
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_PATTERN.match(text, pos)
        if match is None:
            raise ContractSyntaxError(f"unexpected character {text[pos]!r}", SourceLoc(line, pos - line_start + 1))
        kind = match.lastgroup
        loc = SourceLoc(line, pos - line_start + 1)
        pos = match.end()
        if kind == "newline":
            line, line_start = line + 1, pos
        elif kind == "int":
            yield _Token(TOKEN_INT, match.group(), loc)
        elif kind == "ident":
            word = match.group()
            yield _Token(TOKEN_KEYWORD if word in KEYWORDS else TOKEN_IDENT, word, loc)
        elif kind == "op":
            yield _Token(TOKEN_OP, match.group(), loc)
    yield _Token(TOKEN_EOF, "", SourceLoc(line, pos - line_start + 1))


class _FunctionScope:
    """Names visible at the current point of a function body; a let ends with its block."""

    def __init__(self, params: Tuple[str, ...]):
        self.names: Set[str] = set(params)
        self._outer: List[Set[str]] = []

    def open_block(self):
        self._outer.append(set(self.names))

    def close_block(self):
        self.names = self._outer.pop()


class ContractParser:
    """Recursive-descent parser for the contract DSL."""

    def __init__(self, text: str):
        self._text = text
        self._tokens = list(tokenize(text))
        self._pos = 0
        self._decls: Dict[str, PersistentDecl] = {}
        self._literals: Set[int] = set()
        self._scope: Optional[_FunctionScope] = None

    @classmethod
    def parse(cls, text: str) -> Contract:
        """
        Parse a whole contract.

        Args:
            text: DSL source

        Returns:
            Contract with deterministic source locations

        Raises:
            ContractSyntaxError: malformed source
            ContractScopeError: duplicate or unresolved names
        """
        return cls(text)._parse_contract()

    # --- token helpers ---

    def _peek(self, offset: int = 0) -> _Token:
        return self._tokens[min(self._pos + offset, len(self._tokens) - 1)]

    def _advance(self) -> _Token:
        token = self._tokens[self._pos]
        if token.kind != TOKEN_EOF:
            self._pos += 1
        return token

    def _check(self, text: str) -> bool:
        token = self._peek()
        return token.kind in (TOKEN_OP, TOKEN_KEYWORD) and token.text == text

    def _accept(self, text: str) -> Optional[_Token]:
        if self._check(text):
            return self._advance()
        return None

    def _expect(self, text: str) -> _Token:
        token = self._peek()
        if not self._check(text):
            found = token.text or "end of input"
            raise ContractSyntaxError(f"expected {text!r}, found {found!r}", token.loc)
        return self._advance()

    def _expect_ident(self, what: str) -> _Token:
        token = self._peek()
        if token.kind != TOKEN_IDENT:
            found = token.text or "end of input"
            raise ContractSyntaxError(f"expected {what}, found {found!r}", token.loc)
        return self._advance()

    # --- top level ---

    def _parse_contract(self) -> Contract:
        self._expect("contract")
        name = self._expect_ident("contract name").text
        self._expect("{")
        decls: List[PersistentDecl] = []
        functions: Dict[str, FunctionDef] = {}
        init: Optional[FunctionDef] = None
        while not self._check("}"):
            token = self._peek()
            if self._check("var"):
                if functions or init is not None:
                    raise ContractSyntaxError("declarations must precede functions", token.loc)
                decls.append(self._parse_decl())
            elif self._check("fn"):
                fn = self._parse_function()
                if fn.name == "init":
                    if init is not None:
                        raise ContractScopeError("duplicate declaration of init", fn.loc)
                    init = fn
                elif fn.name in functions:
                    raise ContractScopeError(f"duplicate function {fn.name!r}", fn.loc)
                else:
                    functions[fn.name] = fn
            else:
                raise ContractSyntaxError(f"expected 'var', 'fn' or '}}', found {token.text or 'end of input'!r}", token.loc)
        self._expect("}")
        trailing = self._peek()
        if trailing.kind != TOKEN_EOF:
            raise ContractSyntaxError(f"unexpected {trailing.text!r} after contract", trailing.loc)
        return Contract(
            name=name,
            decls=tuple(decls),
            functions=functions,
            init=init,
            literals=frozenset(self._literals),
            source=self._text,
        )

    def _parse_decl(self) -> PersistentDecl:
        loc = self._expect("var").loc
        name_token = self._expect_ident("variable name")
        if name_token.text in self._decls:
            raise ContractScopeError(f"duplicate declaration of {name_token.text!r}", name_token.loc)
        kind = DeclKind.SCALAR
        if self._accept("["):
            self._expect("]")
            kind = DeclKind.ARRAY
        initializer = 0
        if self._accept("="):
            if kind is DeclKind.ARRAY:
                raise ContractSyntaxError("arrays cannot have an initializer", self._peek().loc)
            initializer = self._parse_int_literal()
        self._expect(";")
        decl = PersistentDecl(name_token.text, kind, initializer, loc)
        self._decls[decl.name] = decl
        return decl

    def _parse_int_literal(self) -> int:
        negative = self._accept("-") is not None
        token = self._peek()
        if token.kind != TOKEN_INT:
            raise ContractSyntaxError(f"expected integer, found {token.text or 'end of input'!r}", token.loc)
        self._advance()
        value = -int(token.text) if negative else int(token.text)
        if not fits_literal(value):
            raise ContractSyntaxError(f"integer {value} does not fit in 64 bits", token.loc)
        value = wrap(value)
        self._literals.add(value)
        return value

    def _parse_function(self) -> FunctionDef:
        self._expect("fn")
        token = self._peek()
        if self._accept("init"):
            name = "init"
        else:
            name = self._expect_ident("function name").text
        self._expect("(")
        params: List[str] = []
        if not self._check(")"):
            while True:
                param = self._expect_ident("parameter name")
                if param.text in params:
                    raise ContractScopeError(f"duplicate parameter {param.text!r}", param.loc)
                if param.text in self._decls:
                    raise ContractScopeError(f"parameter {param.text!r} shadows a persistent variable", param.loc)
                params.append(param.text)
                if not self._accept(","):
                    break
        self._expect(")")
        if name == "init" and params:
            raise ContractSyntaxError("init takes no parameters", token.loc)
        self._scope = _FunctionScope(tuple(params))
        body = self._parse_block()
        self._scope = None
        return FunctionDef(name, tuple(params), body, token.loc)

    # --- statements ---

    def _parse_block(self) -> Tuple[Stmt, ...]:
        self._expect("{")
        self._scope.open_block()
        body: List[Stmt] = []
        while not self._check("}"):
            if self._peek().kind == TOKEN_EOF:
                raise ContractSyntaxError("unterminated block", self._peek().loc)
            body.append(self._parse_statement())
        self._expect("}")
        self._scope.close_block()
        return tuple(body)

    def _parse_statement(self) -> Stmt:
        token = self._peek()
        loc = token.loc
        if self._accept("let"):
            name = self._expect_ident("local name")
            if name.text in self._scope.names or name.text in self._decls:
                raise ContractScopeError(f"duplicate declaration of {name.text!r}", name.loc)
            self._expect("=")
            value = self._parse_expr()
            self._expect(";")
            self._scope.names.add(name.text)
            return LetStmt(name.text, value, loc)
        if self._accept("require"):
            cond = self._parse_paren_condition()
            self._expect(";")
            return RequireStmt(cond, loc)
        if self._accept("assert"):
            cond = self._parse_paren_condition()
            self._expect(";")
            return AssertStmt(cond, loc)
        if self._accept("if"):
            return self._parse_if(loc)
        if self._accept("while"):
            cond = self._parse_paren_condition()
            return WhileStmt(cond, self._parse_block(), loc)
        if self._accept("return"):
            value = None if self._check(";") else self._parse_expr()
            self._expect(";")
            return ReturnStmt(value, loc)
        if self._accept("halt"):
            self._expect(";")
            return HaltStmt(loc)
        if self._accept("push"):
            array = self._expect_array()
            value = self._parse_expr()
            self._expect(";")
            return PushStmt(array, value, loc)
        if self._accept("pop"):
            array = self._expect_array()
            self._expect(";")
            return PopStmt(array, loc)
        if token.kind == TOKEN_IDENT:
            return self._parse_assignment()
        raise ContractSyntaxError(f"unexpected {token.text or 'end of input'!r}", loc)

    def _parse_if(self, loc: SourceLoc) -> IfStmt:
        cond = self._parse_paren_condition()
        then_body = self._parse_block()
        else_body: Tuple[Stmt, ...] = ()
        if self._accept("else"):
            nested = self._peek()
            if self._accept("if"):
                else_body = (self._parse_if(nested.loc),)
            else:
                else_body = self._parse_block()
        return IfStmt(cond, then_body, else_body, loc)

    def _parse_assignment(self) -> Stmt:
        name = self._advance()
        if self._accept("["):
            self._require_kind(name, DeclKind.ARRAY)
            index = self._parse_expr()
            self._expect("]")
            self._expect("=")
            value = self._parse_expr()
            self._expect(";")
            return StoreElement(name.text, index, value, name.loc)
        self._expect("=")
        value = self._parse_expr()
        self._expect(";")
        if name.text in self._scope.names:
            return AssignLocal(name.text, value, name.loc)
        self._require_kind(name, DeclKind.SCALAR)
        return StoreScalar(name.text, value, name.loc)

    def _expect_array(self) -> str:
        token = self._expect_ident("array name")
        self._require_kind(token, DeclKind.ARRAY)
        return token.text

    def _require_kind(self, token: _Token, kind: DeclKind):
        decl = self._decls.get(token.text)
        if decl is None:
            raise ContractScopeError(f"unknown name {token.text!r}", token.loc)
        if decl.kind is not kind:
            raise ContractScopeError(f"{token.text!r} is not a {kind.value}", token.loc)

    # --- conditions and expressions ---

    def _parse_paren_condition(self) -> Condition:
        self._expect("(")
        cond = self._parse_condition()
        self._expect(")")
        return cond

    def _parse_condition(self) -> Condition:
        loc = self._peek().loc
        left = self._parse_expr()
        token = self._peek()
        if token.kind != TOKEN_OP or token.text not in _COMPARISON_TOKENS:
            raise ContractSyntaxError(f"expected comparison operator, found {token.text or 'end of input'!r}", token.loc)
        self._advance()
        op, unsigned = _COMPARISON_TOKENS[token.text]
        if self._check(")"):
            raise ContractSyntaxError("missing right operand of comparison", self._peek().loc)
        right = self._parse_expr()
        return Condition(op, unsigned, left, right, loc)

    def _parse_expr(self) -> Expr:
        left = self._parse_term()
        while self._peek().kind == TOKEN_OP and self._peek().text in ("+", "-"):
            op = self._advance()
            left = BinaryExpr(op.text, left, self._parse_term(), op.loc)
        return left

    def _parse_term(self) -> Expr:
        left = self._parse_unary()
        while self._peek().kind == TOKEN_OP and self._peek().text in ("*", "/", "%"):
            op = self._advance()
            left = BinaryExpr(op.text, left, self._parse_unary(), op.loc)
        return left

    def _parse_unary(self) -> Expr:
        token = self._peek()
        if self._check("-"):
            if self._peek(1).kind == TOKEN_INT:
                return IntLiteral(self._parse_int_literal(), token.loc)
            self._advance()
            return NegateExpr(self._parse_unary(), token.loc)
        return self._parse_primary()

    def _parse_primary(self) -> Expr:
        token = self._peek()
        if token.kind == TOKEN_INT:
            return IntLiteral(self._parse_int_literal(), token.loc)
        if self._accept("sender"):
            return SenderExpr(token.loc)
        if self._accept("len"):
            return LengthExpr(self._expect_array(), token.loc)
        if self._accept("("):
            inner = self._parse_expr()
            self._expect(")")
            return inner
        if token.kind == TOKEN_IDENT:
            self._advance()
            if self._check("["):
                self._require_kind(token, DeclKind.ARRAY)
                self._advance()
                index = self._parse_expr()
                self._expect("]")
                return ElementExpr(token.text, index, token.loc)
            if self._scope is not None and token.text in self._scope.names:
                return LocalVar(token.text, token.loc)
            self._require_kind(token, DeclKind.SCALAR)
            return StorageVar(token.text, token.loc)
        raise ContractSyntaxError(f"expected expression, found {token.text or 'end of input'!r}", token.loc)


def parse_contract(text: str) -> Contract:
    """Parse DSL source into a Contract (see ContractParser.parse)."""
    return ContractParser.parse(text)
