"""Recursive-descent parser for BioFlow query text.

Grammar (keywords case-insensitive):

    query   := 'select' idents 'from' '(' blocks ')' ['where' preds] ';'
    blocks  := ['with'] alias 'as' '(' extract ')' {',' ['with'] alias 'as' '(' extract ')'}
    extract := 'extract' idents
               'using' 'matcher' name ['filler' name] 'wrapper' name
               'from' url
               'submit' ident
    preds   := pred {'and' pred}
    pred    := ident ('=' | 'like') literal
    literal := quoted string | number

Names may contain hyphens (S-match, Web-Prospector); URLs run to the next
whitespace, so they must be whitespace-delimited.
"""

from __future__ import annotations

from ..errors import ParseError, SemanticError
from .ast import BioFlowQuery, ExtractClause, Predicate, WithClause

_PUNCT = "(),;="


class _Lexer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos < len(self.source) and self.source[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def skip_ws(self) -> None:
        while self.pos < len(self.source) and self.source[self.pos].isspace():
            self._advance()

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.source)

    def next_token(self, url_mode: bool = False) -> tuple[str, str, int, int]:
        """Returns (kind, text, line, col); kind is punct|word|string."""
        self.skip_ws()
        if self.pos >= len(self.source):
            raise ParseError("unexpected end of input", self.line, self.col)
        line, col = self.line, self.col
        ch = self.source[self.pos]
        if ch == "'":
            self._advance()
            out = []
            while True:
                if self.pos >= len(self.source):
                    raise ParseError("unterminated string literal", line, col)
                c = self.source[self.pos]
                if c == "'":
                    # '' escapes a quote inside the literal
                    if self.pos + 1 < len(self.source) and self.source[self.pos + 1] == "'":
                        out.append("'")
                        self._advance(2)
                        continue
                    self._advance()
                    return ("string", "".join(out), line, col)
                out.append(c)
                self._advance()
        if url_mode:
            out = []
            while self.pos < len(self.source) and not self.source[self.pos].isspace():
                out.append(self.source[self.pos])
                self._advance()
            return ("word", "".join(out), line, col)
        if ch in _PUNCT:
            self._advance()
            return ("punct", ch, line, col)
        out = []
        while (
            self.pos < len(self.source)
            and not self.source[self.pos].isspace()
            and self.source[self.pos] not in _PUNCT
            and self.source[self.pos] != "'"
        ):
            out.append(self.source[self.pos])
            self._advance()
        return ("word", "".join(out), line, col)

    def peek_token(self) -> tuple[str, str, int, int] | None:
        saved = (self.pos, self.line, self.col)
        try:
            if self.at_end():
                return None
            tok = self.next_token()
        finally:
            self.pos, self.line, self.col = saved
        return tok


class _Parser:
    def __init__(self, source: str):
        self.lex = _Lexer(source)

    def _fail(self, expected: str, tok: tuple[str, str, int, int]) -> ParseError:
        return ParseError(
            f"expected {expected}, found {tok[1]!r}", tok[2], tok[3], [expected]
        )

    def keyword(self, *kws: str) -> str:
        tok = self.lex.next_token()
        if tok[0] != "word" or tok[1].lower() not in kws:
            raise self._fail(" or ".join(kws), tok)
        return tok[1].lower()

    def maybe_keyword(self, *kws: str) -> str | None:
        peek = self.lex.peek_token()
        if peek and peek[0] == "word" and peek[1].lower() in kws:
            self.lex.next_token()
            return peek[1].lower()
        return None

    def punct(self, ch: str) -> None:
        tok = self.lex.next_token()
        if tok[0] != "punct" or tok[1] != ch:
            raise self._fail(repr(ch), tok)

    def word(self, what: str) -> str:
        tok = self.lex.next_token()
        if tok[0] != "word" or not tok[1]:
            raise self._fail(what, tok)
        return tok[1]

    def ident_list(self) -> list[str]:
        items = [self.word("identifier")]
        while True:
            peek = self.lex.peek_token()
            if peek and peek[0] == "punct" and peek[1] == ",":
                self.lex.next_token()
                items.append(self.word("identifier"))
            else:
                return items

    def literal(self) -> str | int | float:
        tok = self.lex.next_token()
        if tok[0] == "string":
            return tok[1]
        if tok[0] == "word":
            text = tok[1]
            try:
                return int(text)
            except ValueError:
                pass
            try:
                return float(text)
            except ValueError:
                pass
            raise self._fail("quoted string or number", tok)
        raise self._fail("literal", tok)

    def extract(self) -> ExtractClause:
        self.keyword("extract")
        attributes = self.ident_list()
        self.keyword("using")
        self.keyword("matcher")
        matcher = self.word("matcher name")
        filler = None
        if self.maybe_keyword("filler"):
            filler = self.word("filler name")
        self.keyword("wrapper")
        wrapper = self.word("wrapper name")
        self.keyword("from")
        url = self.lex.next_token(url_mode=True)[1]
        if not url:
            raise ParseError("empty source url", self.lex.line, self.lex.col)
        self.keyword("submit")
        binding = self.word("submit binding")
        return ExtractClause(
            attributes=tuple(attributes),
            matcher=matcher,
            wrapper=wrapper,
            source_url=url,
            submit_binding=binding,
            filler=filler,
        )

    def with_block(self, first: bool) -> WithClause:
        if first:
            self.keyword("with")
        else:
            self.maybe_keyword("with")
        alias = self.word("alias")
        self.keyword("as")
        self.punct("(")
        clause = self.extract()
        self.punct(")")
        return WithClause(alias=alias, extract=clause)

    def predicate(self) -> Predicate:
        column = self.word("predicate column")
        tok = self.lex.next_token()
        if tok[0] == "punct" and tok[1] == "=":
            op = "="
        elif tok[0] == "word" and tok[1].lower() == "like":
            op = "like"
        else:
            raise self._fail("'=' or 'like'", tok)
        return Predicate(column=column, op=op, literal=self.literal())

    def query(self) -> BioFlowQuery:
        self.keyword("select")
        select_columns = self.ident_list()
        self.keyword("from")
        self.punct("(")
        blocks = [self.with_block(first=True)]
        while True:
            peek = self.lex.peek_token()
            if peek and peek[0] == "punct" and peek[1] == ",":
                self.lex.next_token()
                blocks.append(self.with_block(first=False))
            else:
                break
        self.punct(")")
        predicates: list[Predicate] = []
        if self.maybe_keyword("where"):
            predicates.append(self.predicate())
            while self.maybe_keyword("and"):
                predicates.append(self.predicate())
        self.punct(";")
        if not self.lex.at_end():
            tok = self.lex.next_token()
            raise ParseError(
                f"unexpected input after ';': {tok[1]!r}", tok[2], tok[3], ["end of input"]
            )
        return BioFlowQuery(
            with_clauses=tuple(blocks),
            select_columns=tuple(select_columns),
            where_predicates=tuple(predicates),
        )


def parse_bioflow(source: str) -> BioFlowQuery:
    """Parse BioFlow text into an AST, with semantic checks."""
    query = _Parser(source).query()
    seen: set[str] = set()
    for wc in query.with_clauses:
        if wc.alias in seen:
            raise SemanticError(f"duplicate alias {wc.alias!r}")
        seen.add(wc.alias)
        if not wc.extract.attributes:
            raise SemanticError(f"extract in {wc.alias!r} has no attributes")
    return query
