"""Small arithmetic expression language for coefficients and test functions.

Grammar (usual precedence, ``^`` binds tighter than unary minus and is
right-associative)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | "+" unary | power
    power  := atom ("^" unary)?
    atom   := number | name | call | "(" expr ")"
    call   := func "(" expr ("," expr)* ")"

Names are the coordinates ``x1 .. xd`` (``x`` is an alias of ``x1``) and
the constant ``pi``.  Functions: abs, sign, exp, tanh, sqrt, min, max (two
or more arguments) and ``case(e1, ..., em)``, which picks ``e_i`` in
regime i.  ``**`` is accepted for ``^``.

Expressions evaluate on arrays (``x`` of shape (..., d), ``i`` broadcastable
to (...)) either to values or to second-order jets (value, gradient,
Hessian) for test functions.
"""

import math
import re

import numpy as np

from .testfunctions import Growth, TestFunction

FUNCTIONS = {"abs": 1, "sign": 1, "exp": 1, "tanh": 1, "sqrt": 1, "min": -2, "max": -2, "case": -1}
_TOKEN = re.compile(r"(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^(),])")


class ExpressionError(ValueError):
    def __init__(self, message, source=None, position=None):
        if source is not None and position is not None:
            message = f"{message} at column {position + 1} of {source!r}"
        super().__init__(message)
        self.position = position


def _tokens(src):
    out, pos = [], 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos == len(src):
            break
        m = _TOKEN.match(src, pos)
        if not m:
            raise ExpressionError("unexpected character", src, pos)
        if m.group(1):
            out.append(("num", float(m.group(1)), pos))
        elif m.group(2):
            out.append(("name", m.group(2), pos))
        else:
            out.append(("op", "^" if m.group(3) == "**" else m.group(3), pos))
        pos = m.end()
    out.append(("end", None, len(src)))
    return out


class _Parser:
    def __init__(self, src, dim, num_regimes):
        self.src = src
        self.toks = _tokens(src)
        self.k = 0
        self.dim = dim
        self.m = num_regimes

    def peek(self):
        return self.toks[self.k]

    def take(self, kind=None, value=None):
        tok = self.toks[self.k]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise ExpressionError(f"expected {want!r}, found {tok[1]!r}", self.src, tok[2])
        self.k += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected {tok[1]!r}", self.src, tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            inner = self.unary()
            return ("neg", inner) if tok[1] == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return ("const", val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.take("op", ")")
            return node
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                return self.call(val, pos)
            if val == "pi":
                return ("const", math.pi)
            if val == "x":
                return ("coord", 0)
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m:
                k = int(m.group(1))
                if k > self.dim:
                    raise ExpressionError(f"coordinate {val} exceeds dimension {self.dim}", self.src, pos)
                return ("coord", k - 1)
            raise ExpressionError(f"unknown name {val!r}", self.src, pos)
        if kind == "end":
            raise ExpressionError("unexpected end of expression", self.src, pos)
        raise ExpressionError(f"unexpected {val!r}", self.src, pos)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r}", self.src, pos)
        self.take("op", "(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.take("op", ")")
        arity = FUNCTIONS[name]
        if name == "case":
            if len(args) != self.m:
                raise ExpressionError(f"case needs one branch per regime ({self.m}), got {len(args)}",
                                      self.src, pos)
        elif arity > 0 and len(args) != arity:
            raise ExpressionError(f"{name} takes {arity} argument(s), got {len(args)}", self.src, pos)
        elif arity < 0 and len(args) < -arity:
            raise ExpressionError(f"{name} needs at least {-arity} arguments", self.src, pos)
        return ("call", name, tuple(args))


def _depends(node):
    tag = node[0]
    if tag == "const":
        return False
    if tag == "coord":
        return True
    if tag == "call":
        return any(_depends(a) for a in node[2])
    return any(_depends(a) for a in node[1:])


def _select(i, branches, shape):
    """Pick branches[i - 1] elementwise."""
    idx = np.broadcast_to(np.asarray(i) - 1, shape)
    out = np.broadcast_to(branches[0], np.broadcast_shapes(shape, np.shape(branches[0]))).copy()
    for k in range(1, len(branches)):
        out = np.where(idx == k, branches[k], out)
    return out


def _eval(node, x, i, shape):
    tag = node[0]
    if tag == "const":
        return np.full(shape, node[1])
    if tag == "coord":
        return np.broadcast_to(x[..., node[1]], shape)
    if tag == "neg":
        return -_eval(node[1], x, i, shape)
    if tag in "+-*/^":
        a = _eval(node[1], x, i, shape)
        b = _eval(node[2], x, i, shape)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if tag == "+":
                return a + b
            if tag == "-":
                return a - b
            if tag == "*":
                return a * b
            if tag == "/":
                return a / b
            return np.power(a, b)
    name, args = node[1], node[2]
    if name == "case":
        return _select(i, [_eval(a, x, i, shape) for a in args], shape)
    vals = [_eval(a, x, i, shape) for a in args]
    if name == "min":
        return np.minimum.reduce(vals)
    if name == "max":
        return np.maximum.reduce(vals)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return {"abs": np.abs, "sign": np.sign, "exp": np.exp, "tanh": np.tanh,
                "sqrt": np.sqrt}[name](vals[0])


# -- second-order jets --------------------------------------------------------


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _chain(u, f0, f1, f2):
    v, g, h = u
    return f0, f1[..., None] * g, f1[..., None, None] * h + f2[..., None, None] * _outer(g, g)


def _jet(node, x, i, shape):
    d = x.shape[-1]
    tag = node[0]
    if tag == "const":
        return np.full(shape, node[1]), np.zeros(shape + (d,)), np.zeros(shape + (d, d))
    if tag == "coord":
        g = np.zeros(shape + (d,))
        g[..., node[1]] = 1.0
        return np.broadcast_to(x[..., node[1]], shape).copy(), g, np.zeros(shape + (d, d))
    if tag == "neg":
        v, g, h = _jet(node[1], x, i, shape)
        return -v, -g, -h
    if tag in "+-":
        a, b = _jet(node[1], x, i, shape), _jet(node[2], x, i, shape)
        s = 1.0 if tag == "+" else -1.0
        return a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]
    if tag == "*":
        (u, gu, hu), (w, gw, hw) = _jet(node[1], x, i, shape), _jet(node[2], x, i, shape)
        return (u * w, u[..., None] * gw + w[..., None] * gu,
                u[..., None, None] * hw + w[..., None, None] * hu + _outer(gu, gw) + _outer(gw, gu))
    if tag == "/":
        (u, gu, hu), (w, gw, hw) = _jet(node[1], x, i, shape), _jet(node[2], x, i, shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = _chain((w, gw, hw), 1.0 / w, -1.0 / w ** 2, 2.0 / w ** 3)
        return _jet_mul((u, gu, hu), r)
    if tag == "^":
        base = _jet(node[1], x, i, shape)
        if not _depends(node[2]):
            n = float(_eval(node[2], x, i, ()))
            u = base[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                f1 = n * u ** (n - 1) if n != 0 else np.zeros(shape)
                f2 = n * (n - 1) * u ** (n - 2) if n not in (0.0, 1.0) else np.zeros(shape)
                return _chain(base, u ** n, f1, f2)
        expo = _jet(node[2], x, i, shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_base = _chain(base, np.log(base[0]), 1.0 / base[0], -1.0 / base[0] ** 2)
            prod = _jet_mul(expo, log_base)
            e = np.exp(prod[0])
            return _chain(prod, e, e, e)
    name, args = node[1], node[2]
    if name == "case":
        jets = [_jet(a, x, i, shape) for a in args]
        idx = np.broadcast_to(np.asarray(i) - 1, shape)
        out = [j.copy() for j in jets[0]]
        for k in range(1, len(jets)):
            mask = idx == k
            out[0] = np.where(mask, jets[k][0], out[0])
            out[1] = np.where(mask[..., None], jets[k][1], out[1])
            out[2] = np.where(mask[..., None, None], jets[k][2], out[2])
        return tuple(out)
    if name in ("min", "max"):
        jets = [_jet(a, x, i, shape) for a in args]
        out = jets[0]
        for j in jets[1:]:
            pick = (j[0] < out[0]) if name == "min" else (j[0] > out[0])
            out = (np.where(pick, j[0], out[0]), np.where(pick[..., None], j[1], out[1]),
                   np.where(pick[..., None, None], j[2], out[2]))
        return out
    u = _jet(args[0], x, i, shape)
    v = u[0]
    zero = np.zeros(shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if name == "abs":
            return _chain(u, np.abs(v), np.sign(v), zero)
        if name == "sign":
            return _chain(u, np.sign(v), zero, zero)
        if name == "exp":
            e = np.exp(v)
            return _chain(u, e, e, e)
        if name == "tanh":
            t = np.tanh(v)
            return _chain(u, t, 1 - t * t, -2 * t * (1 - t * t))
        s = np.sqrt(v)
        return _chain(u, s, 0.5 / s, -0.25 / (s * v))


def _jet_mul(a, b):
    (u, gu, hu), (w, gw, hw) = a, b
    return (u * w, u[..., None] * gw + w[..., None] * gu,
            u[..., None, None] * hw + w[..., None, None] * hu + _outer(gu, gw) + _outer(gw, gu))


class Expression:
    """A parsed expression over coordinates x1..xd and regimes 1..m."""

    def __init__(self, source, dim, num_regimes=1):
        if not isinstance(source, str):
            raise ExpressionError(f"expression must be a string, got {type(source).__name__}")
        self.source = source
        self.dim = dim
        self.num_regimes = num_regimes
        self.tree = _Parser(source, dim, num_regimes).parse()

    def _args(self, x, i):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"state must have trailing dimension {self.dim}")
        i = np.asarray(i)
        return x, i, np.broadcast_shapes(x.shape[:-1], i.shape)

    def __call__(self, x, i=1):
        x, i, shape = self._args(x, i)
        return _eval(self.tree, x, i, shape)

    def jet(self, x, i=1):
        x, i, shape = self._args(x, i)
        return _jet(self.tree, x, i, shape)

    def __repr__(self):
        return f"Expression({self.source!r})"


def expression_function(source, dim, num_regimes=1, growth=None, name=None):
    """TestFunction from an expression, derivatives by jets."""
    e = Expression(source, dim, num_regimes)
    return TestFunction(value=lambda x, i: e(x, i), gradient=lambda x, i: e.jet(x, i)[1],
                        hessian=lambda x, i: e.jet(x, i)[2],
                        growth=growth or Growth.polynomial(2.0), name=name or source)


__all__ = ["Expression", "ExpressionError", "expression_function", "FUNCTIONS"]
