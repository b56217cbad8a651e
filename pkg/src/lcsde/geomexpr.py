"""A small expression language over set literals for ``lcsde geom``.

    expr    := term ('+' term)*              Minkowski sum, left to right
    term    := factor ('*' factor)*          number * set scales the set
    factor  := number | point | '{' point, ... '}' | JSON set literal
             | 'cone' '{' point, ... '}' | 'orthant' N | name '(' args ')' | '(' expr ')'
    point   := '(' number, number, ... ')'

Functions: sum, scale, translate, hausdorff, excess, distance, support,
join, recession, prune. A cone used where a set is expected stands for the
set ``{0} + C``; a point stands for the singleton.
"""
from __future__ import annotations

import json
import math
import re

import numpy as np

from . import geometry as geo
from .geometry import ConeSpec, LCSet


class GeomParseError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"parse error at position {position}: {message}")
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*(),{}]))"
)


def _tokenize(text):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        if text[pos] == "{" and text[pos:].lstrip("{ \t").startswith('"'):
            end = _json_end(text, pos)
            out.append(("json", text[pos:end], pos))
            pos = end
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise GeomParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _json_end(text, pos):
    depth = 0
    in_str = False
    for i in range(pos, len(text)):
        c = text[i]
        if in_str:
            if c == '"' and text[i - 1] != "\\":
                in_str = False
        elif c == '"':
            in_str = True
        elif c in "{[":
            depth += 1
        elif c in "}]":
            depth -= 1
            if depth == 0:
                return i + 1
    raise GeomParseError("unterminated JSON literal", pos)


class _Point(tuple):
    pass


def _as_set(v, pos):
    if isinstance(v, LCSet):
        return v
    if isinstance(v, ConeSpec):
        return geo.cone_set(v)
    if isinstance(v, _Point):
        return geo.make_set([list(v)], geo.trivial_cone(len(v)))
    raise GeomParseError("expected a set", pos)


def _as_number(v, pos):
    if isinstance(v, float):
        return v
    raise GeomParseError("expected a number", pos)


def _as_point(v, pos):
    if isinstance(v, _Point):
        return np.array(v, dtype=float)
    if isinstance(v, float):
        return np.array([v])
    raise GeomParseError("expected a point", pos)


def _fn_sum(args, pos):
    sets = [_as_set(a, pos) for a in args]
    acc = sets[0]
    for s in sets[1:]:
        acc = geo.minkowski_sum(acc, s)
    return acc


FUNCTIONS = {
    "sum": (1, None, _fn_sum),
    "scale": (2, 2, lambda a, p: geo.scale(_as_number(a[0], p), _as_set(a[1], p))),
    "translate": (2, 2, lambda a, p: geo.translate(_as_set(a[0], p), _as_point(a[1], p))),
    "hausdorff": (2, 2, lambda a, p: geo.hausdorff_distance(_as_set(a[0], p), _as_set(a[1], p))),
    "excess": (2, 2, lambda a, p: geo.excess(_as_set(a[0], p), _as_set(a[1], p))),
    "distance": (2, 2, lambda a, p: geo.point_distance(_as_point(a[0], p), _as_set(a[1], p))),
    "support": (2, 2, lambda a, p: geo.support_function(_as_set(a[0], p), _as_point(a[1], p))),
    "join": (1, None, lambda a, p: geo.convex_join([_as_set(x, p) for x in a])),
    "recession": (1, 1, lambda a, p: geo.recession_cone(_as_set(a[0], p))),
    "prune": (1, 1, lambda a, p: geo.prune(_as_set(a[0], p))),
}


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        t = self.tok
        if (kind and t[0] != kind) or (value is not None and t[1] != value):
            want = value or kind
            got = t[1] or "end of input"
            raise GeomParseError(f"expected {want!r}, found {got!r}", t[2])
        self.i += 1
        return t

    def parse(self):
        v = self.expr()
        if self.tok[0] != "end":
            raise GeomParseError(f"unexpected {self.tok[1]!r}", self.tok[2])
        return v

    def expr(self):
        pos = self.tok[2]
        v = self.term()
        while self.tok[:2] == ("op", "+"):
            self.take()
            rpos = self.tok[2]
            w = self.term()
            v = geo.minkowski_sum(_as_set(v, pos), _as_set(w, rpos))
        return v

    def term(self):
        pos = self.tok[2]
        v = self.factor()
        while self.tok[:2] == ("op", "*"):
            self.take()
            rpos = self.tok[2]
            w = self.factor()
            v = geo.scale(_as_number(v, pos), _as_set(w, rpos))
        return v

    def number(self):
        sign = 1.0
        if self.tok[:2] == ("op", "-"):
            self.take()
            sign = -1.0
        return sign * float(self.take("num")[1])

    def point(self):
        self.take("op", "(")
        vals = [self.number()]
        while self.tok[:2] == ("op", ","):
            self.take()
            vals.append(self.number())
        self.take("op", ")")
        return _Point(vals)

    def point_list(self):
        self.take("op", "{")
        pts = [self.point()]
        while self.tok[:2] == ("op", ","):
            self.take()
            pts.append(self.point())
        self.take("op", "}")
        return np.array(pts, dtype=float)

    def factor(self):
        kind, val, pos = self.tok
        if kind == "num" or (kind == "op" and val == "-" and self.toks[self.i + 1][0] == "num"):
            return self.number()
        if kind == "json":
            self.take()
            try:
                return geo.from_literal(val)
            except (ValueError, KeyError, TypeError) as exc:
                raise GeomParseError(f"bad set literal: {exc}", pos) from None
        if kind == "op" and val == "{":
            P = self.point_list()
            return geo.make_set(P, geo.trivial_cone(P.shape[1]))
        if kind == "op" and val == "(":
            j = self.i + 1
            if self.toks[j][:2] == ("op", "-"):
                j += 1
            if self.toks[j][0] == "num" and self.toks[j + 1][:2] in (("op", ","), ("op", ")")):
                return self.point()
            self.take()
            v = self.expr()
            self.take("op", ")")
            return v
        if kind == "name":
            self.take()
            m = re.fullmatch(r"(orthant|trivial)(\d+)", val)
            if m:
                d = int(m.group(2))
                if d < 1:
                    raise GeomParseError("dimension must be positive", pos)
                return geo.orthant(d) if m.group(1) == "orthant" else geo.trivial_cone(d)
            if val == "cone":
                return geo.make_cone(self.point_list())
            if val in FUNCTIONS:
                lo, hi, fn = FUNCTIONS[val]
                self.take("op", "(")
                args = [self.expr()]
                while self.tok[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.take("op", ")")
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise GeomParseError(f"{val} takes {lo if hi == lo else f'{lo} or more'} arguments", pos)
                return fn(args, pos)
            raise GeomParseError(f"unknown name {val!r}", pos)
        raise GeomParseError(f"unexpected {val or 'end of input'!r}", pos)


def evaluate(text: str):
    return _Parser(text).parse()


def _num(x):
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return int(x)
    return x


def format_value(v) -> str:
    if isinstance(v, LCSet):
        lit = {"vertices": [[_num(c) for c in row] for row in v.vertices]}
        if not v.cone.is_trivial:
            lit["cone"] = [[_num(c) for c in row] for row in v.cone.generators]
        return json.dumps(lit, separators=(",", ":"))
    if isinstance(v, ConeSpec):
        return json.dumps({"cone": [[_num(c) for c in row] for row in v.generators]}, separators=(",", ":"))
    if isinstance(v, _Point):
        return json.dumps([_num(c) for c in v])
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)
