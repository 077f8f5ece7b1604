"""Model-specification language: lexing, parsing, validation, pretty-printing.

A model is a base Bernoulli probability piped through an ordered sequence of
probability-transforming flows:

    y = Ber(1/2) | ScOdds(1+age) | ScRisk1(0+trt1) | ScRisk0(0+trt2)

Grammar (whitespace-insensitive between tokens)::

    model     := ident "=" "Ber" "(" prob ")" ("|" flow)*
    flow      := kind "(" ("0" | "1") ("+" ident)* ")"
    kind      := "ScOdds" | "ScRisk1" | "ScRisk0"
    prob      := integer "/" integer | decimal
    ident     := [A-Za-z][A-Za-z0-9_]*

The leading "0" or "1" inside a flow's parentheses states whether the flow's
linear predictor carries an intercept; each "+ident" appends one covariate
term.  Flow order is semantic: the engine applies flows left to right, and
reordering them generally changes the probability the model implies.

Base probabilities are kept as exact fractions so that printing and reparsing
a model is lossless.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

__all__ = [
    "FlowKind",
    "LinearPredictor",
    "Flow",
    "ModelSpec",
    "ModelSyntaxError",
    "parse",
    "pretty_print",
    "parameter_names",
    "flow_parameter_names",
    "covariate_names",
]

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")


class ModelSyntaxError(ValueError):
    """Raised when a model string cannot be parsed.

    ``position`` is the 0-based character offset where the problem was
    detected; it is also embedded in the message.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class FlowKind(Enum):
    """The three probability-update rules a flow can apply."""

    SC_ODDS = "ScOdds"
    SC_RISK1 = "ScRisk1"
    SC_RISK0 = "ScRisk0"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_KIND_BY_NAME = {kind.value: kind for kind in FlowKind}


@dataclass(frozen=True)
class LinearPredictor:
    """Linear predictor of one flow: optional intercept plus covariate terms.

    ``terms`` lists covariate names in textual order; duplicates within one
    predictor are rejected.  The predictor may be empty (no intercept, no
    terms), in which case the flow's scaler is exp(0) = 1.
    """

    has_intercept: bool
    terms: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in self.terms:
            if not _IDENT_RE.fullmatch(name):
                raise ValueError(f"invalid covariate name {name!r}")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError(f"duplicate covariate in predictor: {self.terms}")


@dataclass(frozen=True)
class Flow:
    """One probability-transforming stage: a kind plus its linear predictor.

    ``position`` is the 1-based slot of the flow in its model; it determines
    the flow's parameter names (``f{position}.intercept``,
    ``f{position}.<covariate>``).
    """

    kind: FlowKind
    predictor: LinearPredictor
    position: int

    def __post_init__(self) -> None:
        if self.position < 1:
            raise ValueError(f"flow position must be >= 1, got {self.position}")


@dataclass(frozen=True)
class ModelSpec:
    """A parsed model: outcome name, base probability, ordered flows."""

    outcome: str
    base_prob: Fraction
    flows: tuple[Flow, ...]

    def __post_init__(self) -> None:
        if not _IDENT_RE.fullmatch(self.outcome):
            raise ValueError(f"invalid outcome name {self.outcome!r}")
        if not 0 <= self.base_prob <= 1:
            raise ValueError(f"base probability {self.base_prob} outside [0, 1]")
        for i, flow in enumerate(self.flows, start=1):
            if flow.position != i:
                raise ValueError(
                    f"flow positions must be contiguous from 1, got {flow.position} at slot {i}"
                )


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT = "=()|+/"


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident", "number", one of _PUNCT, or "eof"
    text: str
    pos: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("ident", m.group(), i))
            i = m.end()
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            tokens.append(_Token("number", m.group(), i))
            i = m.end()
            continue
        raise ModelSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("eof", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._i = 0

    def _peek(self) -> _Token:
        return self._tokens[self._i]

    def _next(self) -> _Token:
        tok = self._tokens[self._i]
        self._i += 1
        return tok

    def _expect(self, kind: str, what: str) -> _Token:
        tok = self._next()
        if tok.kind != kind:
            found = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise ModelSyntaxError(f"expected {what}, found {found}", tok.pos)
        return tok

    def parse_model(self) -> ModelSpec:
        outcome = self._expect("ident", "outcome name").text
        self._expect("=", "'='")
        head = self._expect("ident", "'Ber'")
        if head.text != "Ber":
            raise ModelSyntaxError(f"expected 'Ber', found {head.text!r}", head.pos)
        self._expect("(", "'('")
        base = self._parse_prob()
        self._expect(")", "')'")
        flows: list[Flow] = []
        while self._peek().kind == "|":
            self._next()
            flows.append(self._parse_flow(position=len(flows) + 1))
        tail = self._peek()
        if tail.kind != "eof":
            raise ModelSyntaxError(f"expected '|' or end of input, found {tail.text!r}", tail.pos)
        return ModelSpec(outcome=outcome, base_prob=base, flows=tuple(flows))

    def _parse_prob(self) -> Fraction:
        tok = self._expect("number", "probability")
        if self._peek().kind == "/":
            if "." in tok.text:
                raise ModelSyntaxError("rational probability parts must be integers", tok.pos)
            self._next()
            den = self._expect("number", "denominator")
            if "." in den.text:
                raise ModelSyntaxError("rational probability parts must be integers", den.pos)
            if int(den.text) == 0:
                raise ModelSyntaxError("zero denominator in probability", den.pos)
            value = Fraction(int(tok.text), int(den.text))
        else:
            value = Fraction(tok.text)
        if not 0 <= value <= 1:
            raise ModelSyntaxError(f"base probability {value} outside [0, 1]", tok.pos)
        return value

    def _parse_flow(self, position: int) -> Flow:
        name = self._expect("ident", "flow name")
        kind = _KIND_BY_NAME.get(name.text)
        if kind is None:
            raise ModelSyntaxError(f"unknown flow name {name.text!r}", name.pos)
        self._expect("(", "'('")
        prefix = self._next()
        if prefix.kind != "number" or prefix.text not in ("0", "1"):
            found = repr(prefix.text) if prefix.kind != "eof" else "end of input"
            raise ModelSyntaxError(f"expected intercept marker '0' or '1', found {found}", prefix.pos)
        terms: list[str] = []
        while self._peek().kind == "+":
            self._next()
            term = self._expect("ident", "covariate name")
            if term.text in terms:
                raise ModelSyntaxError(f"duplicate covariate {term.text!r} in predictor", term.pos)
            terms.append(term.text)
        self._expect(")", "')'")
        predictor = LinearPredictor(has_intercept=prefix.text == "1", terms=tuple(terms))
        return Flow(kind=kind, predictor=predictor, position=position)


def parse(text: str) -> ModelSpec:
    """Parse a model string into a :class:`ModelSpec`.

    Raises :class:`ModelSyntaxError` (with a character offset) on lexical
    errors, unknown flow names, malformed predictors, out-of-range base
    probabilities, and duplicate covariates within a predictor.
    """
    return _Parser(_lex(text)).parse_model()


# ---------------------------------------------------------------------------
# Printing and name derivation
# ---------------------------------------------------------------------------


def pretty_print(spec: ModelSpec) -> str:
    """Render a spec back to canonical source text.

    The output reparses to an equal spec: fractions print as ``num/den``
    (or a bare integer when the denominator is 1) and flow predictors print
    with their ``0``/``1`` intercept marker followed by ``+covariate`` terms.
    """
    parts = [f"{spec.outcome} = Ber({spec.base_prob})"]
    for flow in spec.flows:
        marker = "1" if flow.predictor.has_intercept else "0"
        terms = "".join(f"+{t}" for t in flow.predictor.terms)
        parts.append(f"{flow.kind.value}({marker}{terms})")
    return " | ".join(parts)


def flow_parameter_names(flow: Flow) -> list[str]:
    """Parameter names owned by one flow, intercept first then terms in order."""
    names = []
    if flow.predictor.has_intercept:
        names.append(f"f{flow.position}.intercept")
    names.extend(f"f{flow.position}.{term}" for term in flow.predictor.terms)
    return names


def parameter_names(spec: ModelSpec) -> list[str]:
    """All parameter names of a spec, flow by flow in model order."""
    names: list[str] = []
    for flow in spec.flows:
        names.extend(flow_parameter_names(flow))
    return names


def covariate_names(spec: ModelSpec) -> list[str]:
    """Covariates referenced anywhere in the spec, in order of first use."""
    seen: list[str] = []
    for flow in spec.flows:
        for term in flow.predictor.terms:
            if term not in seen:
                seen.append(term)
    return seen
