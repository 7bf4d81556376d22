"""Tiny expression language for drift, noise intensity, and coupling terms.

Grammar: numeric literals, variables (x1..xn, y1..ym, t), named parameters,
binary + - * / ^, unary minus, and the functions sin cos exp tanh abs sqrt.
Precedence: ^  >  unary minus  >  * /  >  + -, with ^ right-associative, so
-x1^2 means -(x1^2) and 2^-3 is legal.

Three consumers:
  * evaluate()        checked scalar tree walk (scenario validation, oracles)
  * compile_source()  emits a python function over arrays, exec'd once and
                      either njit-compiled (numba backend) or used as-is on
                      numpy arrays; the fast path is unchecked IEEE math
  * pretty()          minimal-parenthesis rendering; re-parsing the output
                      gives an evaluation-equivalent tree
"""

import math
import re

from .errors import ExprEvalError, ExprSyntaxError

FUNCTIONS = ("abs", "cos", "exp", "sin", "sqrt", "tanh")

_TOKEN_RE = re.compile(r"""
    (?P<num>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[+\-*/^()])
  | (?P<ws>\s+)
""", re.VERBOSE)

_BP_ADD = 10
_BP_MUL = 20
_BP_UNARY = 30
_BP_POW = 40


def _byte_offset(source, char_pos):
    return len(source[:char_pos].encode("utf-8"))


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {source[pos]!r}",
                _byte_offset(source, pos),
                expected=("number", "identifier", "operator"))
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), _byte_offset(source, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(source, len(source))))
    return tokens


class Expr:
    """Immutable parse tree plus its source text and free-variable set.

    Nodes are nested tuples:
        ('num', value) ('var', name) ('neg', node)
        ('bin', op, left, right) ('call', fname, node)
    """

    __slots__ = ("root", "source", "free_vars")

    def __init__(self, root, source):
        self.root = root
        self.source = source
        names = set()
        _collect_vars(root, names)
        self.free_vars = frozenset(names)

    def __repr__(self):
        return f"Expr({pretty(self)!r})"

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)


def _collect_vars(node, out):
    kind = node[0]
    if kind == "var":
        out.add(node[1])
    elif kind == "neg":
        _collect_vars(node[1], out)
    elif kind == "call":
        _collect_vars(node[2], out)
    elif kind == "bin":
        _collect_vars(node[2], out)
        _collect_vars(node[3], out)


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok, expected):
        raise ExprSyntaxError(
            f"unexpected {tok[0] if tok[0] != 'end' else 'end of input'}"
            + (f" {tok[1]!r}" if tok[1] else ""),
            tok[2], expected=expected)

    def expression(self, min_bp):
        node = self.prefix()
        while True:
            kind, text, _ = self.peek()
            if kind != "op" or text not in "+-*/^":
                break
            lbp = {"+": _BP_ADD, "-": _BP_ADD,
                   "*": _BP_MUL, "/": _BP_MUL, "^": _BP_POW}[text]
            if lbp <= min_bp:
                break
            self.advance()
            # right child one below its own binding power makes ^ right-assoc
            rhs = self.expression(lbp - 1 if text == "^" else lbp)
            node = ("bin", text, node, rhs)
        return node

    def prefix(self):
        kind, text, _ = self.peek()
        if kind == "num":
            self.advance()
            return ("num", float(text))
        if kind == "ident":
            self.advance()
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(
                        f"unknown function {text!r}", self.tokens[self.i - 1][2],
                        expected=FUNCTIONS)
                self.advance()
                arg = self.expression(0)
                self.expect(")")
                return ("call", text, arg)
            return ("var", text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expression(0)
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            self.advance()
            return ("neg", self.expression(_BP_UNARY))
        self.fail(self.peek(), expected=("number", "identifier", "'('", "'-'"))

    def expect(self, text):
        kind, got, _ = self.peek()
        if kind == "op" and got == text:
            self.advance()
            return
        self.fail(self.peek(), expected=(f"'{text}'",))


def parse(source):
    """Parse `source` into an Expr. Unknown identifiers become free variables."""
    p = _Parser(source)
    node = p.expression(0)
    if p.peek()[0] != "end":
        p.fail(p.peek(), expected=("operator", "end of input"))
    return Expr(node, source)


def evaluate(expr, bindings):
    """Checked evaluation of `expr` with variables bound by `bindings`.

    Raises ExprEvalError for unbound variables, division by zero, sqrt of a
    negative number, or a power with no real value. Overflow saturates to
    +/-inf rather than raising (IEEE semantics).
    """
    return _eval_node(expr.root, bindings)


_FUNC_IMPL = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
              "tanh": math.tanh, "abs": abs, "sqrt": math.sqrt}


def _eval_node(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        try:
            return float(env[node[1]])
        except KeyError:
            raise ExprEvalError(f"unbound variable {node[1]!r}") from None
    if kind == "neg":
        return -_eval_node(node[1], env)
    if kind == "call":
        x = _eval_node(node[2], env)
        if node[1] == "sqrt" and x < 0:
            raise ExprEvalError(f"sqrt of negative number {x!r}")
        try:
            return _FUNC_IMPL[node[1]](x)
        except OverflowError:
            return math.inf if x > 0 else 0.0
    op, a, b = node[1], _eval_node(node[2], env), _eval_node(node[3], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprEvalError(f"division by zero ({a!r} / 0)")
        return a / b
    # op == "^"
    try:
        out = a ** b
    except OverflowError:
        return math.inf
    except ZeroDivisionError:
        raise ExprEvalError(f"zero raised to negative power {b!r}") from None
    # python float pow returns complex for negative base ** fractional exponent
    if isinstance(out, complex):
        raise ExprEvalError(f"power {a!r} ^ {b!r} has no real value")
    return out


def pretty(expr):
    """Render with the minimal parentheses that preserve evaluation order."""
    return _render(expr.root, 0)


def _render(node, parent_bp):
    kind = node[0]
    if kind == "num":
        v = node[1]
        text = repr(int(v)) if v == int(v) and abs(v) < 1e16 else repr(v)
        return text
    if kind == "var":
        return node[1]
    if kind == "call":
        return f"{node[1]}({_render(node[2], 0)})"
    if kind == "neg":
        inner = _render(node[1], _BP_UNARY)
        text = f"-{inner}"
        return f"({text})" if parent_bp > _BP_UNARY else text
    op = node[1]
    bp = {"+": _BP_ADD, "-": _BP_ADD, "*": _BP_MUL, "/": _BP_MUL, "^": _BP_POW}[op]
    # left child at bp-1 for right-assoc ^, right child at bp for - / (non-comm)
    if op == "^":
        left = _render(node[2], bp)
        right = _render(node[3], bp - 1)
    else:
        left = _render(node[2], bp - 1)
        right = _render(node[3], bp)
    text = f"{left} {op} {right}"
    return f"({text})" if bp <= parent_bp else text


def compile_source(name, exprs, var_map, param_names):
    """Emit python source for a function evaluating `exprs` elementwise.

    The function signature is fn(*arrays, t, par, out) where `var_map` sends
    variable names to index expressions over the array arguments (e.g.
    {'x1': 'x[0]', 'y1': 'y[0]'}) and parameters are read from `par` by
    position. `exprs` maps flat output indices to Expr objects; the caller
    chooses the out shape. Works unchanged for scalar entries (numba, x is
    a 1-D state) and for vectorized entries (numpy, x rows are path arrays).
    """
    args = sorted({v.split("[")[0] for v in var_map.values() if "[" in v})
    lines = [f"def {name}({', '.join(args)}, t, par, out):"]
    pidx = {p: i for i, p in enumerate(param_names)}
    for out_expr, expr in exprs:
        body = _emit(expr.root, var_map, pidx, expr)
        lines.append(f"    out{out_expr} = {body}")
    if len(lines) == 1:
        lines.append("    pass")
    return "\n".join(lines) + "\n"


def _emit(node, var_map, pidx, expr):
    kind = node[0]
    if kind == "num":
        v = node[1]
        return repr(v)
    if kind == "var":
        name = node[1]
        if name in var_map:
            return var_map[name]
        if name in pidx:
            return f"par[{pidx[name]}]"
        raise ExprEvalError(
            f"unbound variable {name!r} in expression {expr.source!r}")
    if kind == "neg":
        return f"(-{_emit(node[1], var_map, pidx, expr)})"
    if kind == "call":
        return f"np.{node[1]}({_emit(node[2], var_map, pidx, expr)})"
    op, a, b = node[1], node[2], node[3]
    if op == "^":
        if b[0] == "num" and b[1] == int(b[1]) and abs(b[1]) <= 64:
            k = int(b[1])
            base = _emit(a, var_map, pidx, expr)
            # multiply chains are bitwise identical across scalar and
            # vectorized evaluation; pow is not, so expand small powers
            if 2 <= k <= 4 and len(base) <= 80:
                return "(" + " * ".join([base] * k) + ")"
            return f"({base} ** {k})"
        return f"({_emit(a, var_map, pidx, expr)} ** {_emit(b, var_map, pidx, expr)})"
    return f"({_emit(a, var_map, pidx, expr)} {op} {_emit(b, var_map, pidx, expr)})"


def exec_source(source, name):
    """Execute emitted source and return the function (numpy namespace bound)."""
    import numpy as np
    ns = {"np": np}
    exec(compile(source, f"<stodyn:{name}>", "exec"), ns)
    return ns[name]
