"""Synthetic generator of paired decompilations with known ground truth.

Each template builds the same function twice: a "stripped" tree using
decompiler names (v1, v2, ...) and a "debug" tree using developer names.
Per-variable offset signatures agree across the pair, but the trees may
diverge structurally (loop form rewrites, materialized temporaries), and
the stripped side may carry extra temporaries with no debug counterpart.
Pairs can also carry an injected signature collision: two single-mention
variables sharing one instruction offset on both sides.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .alignment import CorpusEntry, Rejection, build_corpus_entry, extract_signatures
from .astcore import Ast, AstNode

# Generation knobs; fractions are expectations over a uniform template mix.
DIVERGENCE_PROB = 0.5
TEMPORARY_PROB = 0.45
COLLISION_PROB = 0.08
FUNCTIONS_PER_BINARY = 10

_ADDR_BASE = 0x400
_ADDR_STEP = 3


class _Addr:
    """Monotonic instruction-offset allocator for one function."""

    def __init__(self, base: int = _ADDR_BASE):
        self._next = base

    def __call__(self) -> int:
        addr = self._next
        self._next += _ADDR_STEP
        return addr


@dataclass
class _N:
    """Mutable pre-id node; finalize() turns a tree of these into an Ast."""

    tag: str
    addr: int
    dtype: str | None = None
    name: str | None = None
    children: list["_N"] = field(default_factory=list)


def _v(role: str, addr: int, dtype: str = "int") -> _N:
    return _N("var", addr, dtype=dtype, name=role)


def _num(value, addr: int) -> _N:
    return _N("num", addr, dtype="int", name=str(value))


def _n(tag: str, addr: int, *children: _N, name: str | None = None, dtype: str | None = None) -> _N:
    return _N(tag, addr, dtype=dtype, name=name, children=list(children))


def _finalize(function_name: str, root: _N) -> Ast:
    counter = [0]

    def build(node: _N) -> AstNode:
        node_id = counter[0]
        counter[0] += 1
        children = tuple(build(c) for c in node.children)
        return AstNode(
            node_id=node_id,
            syntactic_type=node.tag,
            address=node.addr,
            data_type=node.dtype,
            name=node.name,
            children=children,
        )

    built = build(root)
    return Ast(function_name, built, counter[0])


def _rename_stripped(root: _N) -> dict[str, str]:
    """Assign decompiler names v1, v2, ... by pre-order first mention.

    Mutates var-node names in place; returns role-key -> decompiler name.
    """
    naming: dict[str, str] = {}
    stack = [root]
    order: list[_N] = []
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(reversed(node.children))
    for node in order:
        if node.tag == "var":
            role = node.name or ""
            if role not in naming:
                naming[role] = f"v{len(naming) + 1}"
            node.name = naming[role]
    return naming


def _pick(rng: random.Random, pool: list[tuple[str, float]], used: set[str]) -> str:
    names = [n for n, _ in pool]
    weights = [w for _, w in pool]
    for _ in range(32):
        name = rng.choices(names, weights)[0]
        if name not in used:
            used.add(name)
            return name
    for name in names:
        if name not in used:
            used.add(name)
            return name
    name = f"{names[0]}{rng.randrange(10, 99)}"
    used.add(name)
    return name


_COUNTER = [("i", 0.55), ("j", 0.15), ("n", 0.1), ("k", 0.1), ("idx", 0.1)]
_ACCUM = [("sum", 0.35), ("total", 0.25), ("z", 0.15), ("acc", 0.15), ("s", 0.1)]
_SIZE = [("len", 0.35), ("size", 0.3), ("n", 0.2), ("count", 0.15)]
_BUFFER = [("buf", 0.3), ("data", 0.25), ("arr", 0.2), ("src", 0.15), ("values", 0.1)]
_DEST = [("dst", 0.3), ("dest", 0.25), ("out", 0.2), ("destAddr", 0.15), ("p", 0.1)]
_SRCP = [("src", 0.4), ("s", 0.2), ("in", 0.2), ("srcAddr", 0.2)]
_FD = [("fd", 0.5), ("sock", 0.2), ("fildes", 0.15), ("handle", 0.15)]
_RET = [("ret", 0.3), ("result", 0.25), ("rv", 0.2), ("val", 0.25)]
_VALUE = [("value", 0.3), ("val", 0.25), ("x", 0.25), ("tmp", 0.2)]
_SECOND = [("y", 0.3), ("b", 0.25), ("rhs", 0.25), ("other", 0.2)]
_MAXV = [("max", 0.4), ("m", 0.2), ("best", 0.2), ("top", 0.2)]
_SPARE = [("old", 0.3), ("prev", 0.3), ("copy", 0.2), ("bak", 0.2)]


@dataclass(frozen=True)
class PairTruth:
    """Generator-side ground truth for one stripped/debug pair."""

    mapping: dict[str, str]
    temporaries: frozenset[str]
    collided: frozenset[str]
    divergent: bool

    @property
    def has_temporaries(self) -> bool:
        return bool(self.temporaries)

    @property
    def has_collision(self) -> bool:
        return bool(self.collided)


@dataclass(frozen=True)
class GeneratedPair:
    stripped: Ast
    debug: Ast
    truth: PairTruth


@dataclass
class _TemplateOut:
    stripped: _N
    debug: _N
    roles: dict[str, str | None]  # role key -> developer name (None: temporary)
    fn_name: str
    divergent: bool


def _t_count_loop(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    # c = 0; loop summing c into acc; optionally return through a temp.
    used: set[str] = set()
    c = _pick(rng, _COUNTER, used)
    acc = _pick(rng, _ACCUM, used)
    bound = rng.randrange(3, 100)
    a0, a1, a2, a3 = ab(), ab(), ab(), ab()

    def loop(side_c, side_acc, as_while: bool) -> list[_N]:
        body = _n(
            "block", a1,
            _n("expr", a1, _n("asgadd", a1, _v(side_acc, a1), _v(side_c, a1))),
        )
        cond = _n("sle", a3, _v(side_c, a3), _num(bound, a3))
        if as_while:
            body.children.append(_n("preinc", a2, _v(side_c, a2)))
            return [
                _n("expr", a0, _n("asg", a0, _v(side_c, a0), _num(0, a0))),
                _n("while", a3, cond, body),
            ]
        return [
            _n("for", a0,
               _n("asg", a0, _v(side_c, a0), _num(0, a0)),
               cond,
               _n("preinc", a2, _v(side_c, a2)),
               body),
        ]

    stripped_stmts = loop("$c", "$acc", as_while=divergent)
    debug_stmts = loop(c, acc, as_while=False)
    roles: dict[str, str | None] = {"$c": c, "$acc": acc}
    if want_temp:
        a4, a5 = ab(), ab()
        stripped_stmts += [
            _n("expr", a4, _n("asg", a4, _v("$t", a4), _v("$acc", a4))),
            _n("return", a5, _v("$t", a5)),
        ]
        debug_stmts += [_n("return", a5, _v(acc, a4))]
        roles["$t"] = None
    fn = rng.choice(["sum_range", "count_up", "accumulate", "total_up"])
    return _TemplateOut(
        _n("block", a0, *stripped_stmts),
        _n("block", a0, *debug_stmts),
        roles, fn, divergent or want_temp,
    )


def _t_array_sum(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    used: set[str] = set()
    i = _pick(rng, _COUNTER, used)
    acc = _pick(rng, _ACCUM, used)
    size = _pick(rng, _SIZE, used)
    arr = _pick(rng, _BUFFER, used)
    b0, b1, b2, b3, b4, b5, b6, b7 = (ab() for _ in range(8))

    def make(side, as_while: bool, with_temp: bool) -> _N:
        vi, vacc, vsize, varr = side
        load = _n("index", b5, _v(varr, b5, "int *"), _v(vi, b5))
        if with_temp:
            inner = [
                _n("expr", b5, _n("asg", b5, _v("$t", b5), load)),
                _n("expr", b4, _n("asgadd", b4, _v(vacc, b4), _v("$t", b4))),
            ]
        else:
            inner = [_n("expr", b4, _n("asgadd", b4, _v(vacc, b4), load))]
        body = _n("block", b4, *inner)
        cond = _n("slt", b2, _v(vi, b2), _v(vsize, b2))
        init = _n("asg", b1, _v(vi, b1), _num(0, b1))
        step = _n("preinc", b3, _v(vi, b3))
        stmts = [_n("expr", b0, _n("asg", b0, _v(vacc, b0), _num(0, b0)))]
        if as_while:
            body.children.append(step)
            stmts += [_n("expr", b1, init), _n("while", b2, cond, body)]
        else:
            stmts += [_n("for", b1, init, cond, step, body)]
        stmts += [_n("return", b7, _v(vacc, b6))]
        return _n("block", b0, *stmts)

    stripped = make(("$i", "$acc", "$size", "$arr"), divergent, want_temp)
    debug = make((i, acc, size, arr), False, False)
    roles: dict[str, str | None] = {"$i": i, "$acc": acc, "$size": size, "$arr": arr}
    if want_temp:
        roles["$t"] = None
    fn = rng.choice(["sum_array", "fold_items", "reduce_buf", "sum_values"])
    return _TemplateOut(stripped, debug, roles, fn, divergent or want_temp)


def _t_call_wrapper(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    used: set[str] = set()
    fd = _pick(rng, _FD, used)
    size = _pick(rng, _SIZE, used)
    r = _pick(rng, _RET, used)
    callee = rng.choice(["mmap_buf", "open_file", "read_all", "fetch"])
    on_fail = rng.choice(["perror_exit", "fail", "warn"])
    sentinel = rng.choice([0, 1])
    c0, c1, c2, c3, c4, c5, c6 = (ab() for _ in range(7))

    def make(side, with_temp: bool) -> _N:
        vfd, vsize, vr = side
        call = _n("call", c2, _v(vfd, c0), _v(vsize, c1), name=callee)
        stmts = [
            _n("expr", c2, _n("asg", c2, _v(vr, c2, "void *"), call)),
            _n("if", c3,
               _n("eq", c3, _v(vr, c3, "void *"), _num(sentinel, c3)),
               _n("block", c4, _n("expr", c4, _n("call", c4, _num(1, c4), name=on_fail)))),
        ]
        if with_temp:
            stmts += [
                _n("expr", c5, _n("asg", c5, _v("$t", c5, "void *"), _v(vr, c5, "void *"))),
                _n("return", c6, _v("$t", c6, "void *")),
            ]
        else:
            stmts += [_n("return", c6, _v(vr, c5, "void *"))]
        return _n("block", c0, *stmts)

    stripped = make(("$fd", "$size", "$r"), want_temp)
    debug = make((fd, size, r), False)
    roles: dict[str, str | None] = {"$fd": fd, "$size": size, "$r": r}
    if want_temp:
        roles["$t"] = None
    fn = rng.choice(["open_wrap", "map_file", "fetch_res", "read_wrap"])
    return _TemplateOut(stripped, debug, roles, fn, want_temp)


def _t_copy_loop(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    used: set[str] = set()
    dst = _pick(rng, _DEST, used)
    src = _pick(rng, _SRCP, used)
    d0, d1, d2, d3, d4, d5 = (ab() for _ in range(6))

    def make(side, with_temp: bool) -> _N:
        vd, vs = side
        load = _n("deref", d1, _v(vs, d1, "char *"))
        if with_temp:
            inner = [
                _n("expr", d1, _n("asg", d1, _v("$t", d1, "char"), load)),
                _n("expr", d1, _n("asg", d1, _n("deref", d1, _v(vd, d1, "char *")), _v("$t", d1, "char"))),
            ]
        else:
            inner = [
                _n("expr", d1, _n("asg", d1, _n("deref", d1, _v(vd, d1, "char *")), load)),
            ]
        body = _n("block", d1, *inner,
                  _n("expr", d2, _n("preinc", d2, _v(vd, d2, "char *"))),
                  _n("expr", d3, _n("preinc", d3, _v(vs, d3, "char *"))))
        return _n("block", d0,
                  _n("while", d0, _n("deref", d0, _v(vs, d0, "char *")), body),
                  _n("return", d5, _v(vd, d4, "char *")))

    stripped = make(("$d", "$s"), want_temp)
    debug = make((dst, src), False)
    roles: dict[str, str | None] = {"$d": dst, "$s": src}
    if want_temp:
        roles["$t"] = None
    fn = rng.choice(["copy_str", "copy_chars", "move_bytes", "dup_buf"])
    return _TemplateOut(stripped, debug, roles, fn, want_temp)


def _t_select_max(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    used: set[str] = set()
    a = _pick(rng, _VALUE, used)
    b = _pick(rng, _SECOND, used)
    m = _pick(rng, _MAXV, used)
    e0, e1, e2, e3, e4, e5 = (ab() for _ in range(6))

    def debug_form(side) -> _N:
        va, vb, vm = side
        return _n("block", e0,
                  _n("if", e0,
                     _n("sgt", e0, _v(va, e0), _v(vb, e0)),
                     _n("block", e1, _n("expr", e1, _n("asg", e1, _v(vm, e1), _v(va, e1)))),
                     _n("block", e2, _n("expr", e2, _n("asg", e2, _v(vm, e2), _v(vb, e2))))),
                  _n("return", e3, _v(vm, e3)))

    def split_form(side) -> _N:
        # Same comparisons lowered to two guarded assignments.
        va, vb, vm = side
        return _n("block", e0,
                  _n("if", e0,
                     _n("sgt", e0, _v(va, e0), _v(vb, e0)),
                     _n("block", e1, _n("expr", e1, _n("asg", e1, _v(vm, e1), _v(va, e1))))),
                  _n("if", e2,
                     _n("sle", e0, _v(va, e0), _v(vb, e0)),
                     _n("block", e2, _n("expr", e2, _n("asg", e2, _v(vm, e2), _v(vb, e2))))),
                  _n("return", e3, _v(vm, e3)))

    stripped = split_form(("$a", "$b", "$m")) if divergent else debug_form(("$a", "$b", "$m"))
    roles: dict[str, str | None] = {"$a": a, "$b": b, "$m": m}
    if want_temp:
        stripped.children.pop()
        stripped.children.append(_n("expr", e4, _n("asg", e4, _v("$t", e4), _v("$m", e3))))
        stripped.children.append(_n("return", e5, _v("$t", e5)))
        roles["$t"] = None
        debug = debug_form((a, b, m))
        debug.children[-1] = _n("return", e5, _v(m, e3))
    else:
        debug = debug_form((a, b, m))
    fn = rng.choice(["pick_max", "max_of", "larger", "select_top"])
    return _TemplateOut(stripped, debug, roles, fn, divergent or want_temp)


def _t_scaled_add(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    # return x + K: the stripped side always materializes the sum.
    used: set[str] = set()
    x = _pick(rng, _VALUE, used)
    k = rng.randrange(1, 10)
    f0, f1 = ab(), ab()
    stripped = _n("block", f0,
                  _n("expr", f0, _n("asg", f0, _v("$t", f0), _n("add", f0, _v("$x", f0), _num(k, f0)))),
                  _n("return", f1, _v("$t", f1)))
    debug = _n("block", f0,
               _n("return", f1, _n("add", f0, _v(x, f0), _num(k, f0))))
    fn = rng.choice(["bump", "add_k", "offset_by", "shift_val"])
    return _TemplateOut(stripped, debug, {"$x": x, "$t": None}, fn, True)


def _t_guarded_sum(rng: random.Random, ab: _Addr, divergent: bool, want_temp: bool) -> _TemplateOut:
    used: set[str] = set()
    i = _pick(rng, _COUNTER, used)
    total = _pick(rng, _ACCUM, used)
    n = _pick(rng, _SIZE, used)
    arr = _pick(rng, _BUFFER, used)
    g0, g1, g2, g3, g4, g5, g6, g7 = (ab() for _ in range(8))

    def make(side, as_while: bool, with_temp: bool) -> _N:
        vi, vtotal, vn, varr = side

        def load(addr):
            return _n("index", addr, _v(varr, addr, "int *"), _v(vi, addr))

        if with_temp:
            guarded = _n("block", g4,
                         _n("expr", g4, _n("asg", g4, _v("$t", g4), load(g4))),
                         _n("if", g5,
                            _n("sgt", g5, _v("$t", g5), _num(0, g5)),
                            _n("block", g5, _n("expr", g5, _n("asgadd", g5, _v(vtotal, g5), _v("$t", g5))))))
        else:
            guarded = _n("block", g4,
                         _n("if", g5,
                            _n("sgt", g5, load(g4), _num(0, g5)),
                            _n("block", g5, _n("expr", g5, _n("asgadd", g5, _v(vtotal, g5), load(g4))))))
        cond = _n("slt", g2, _v(vi, g2), _v(vn, g2))
        init = _n("asg", g1, _v(vi, g1), _num(0, g1))
        step = _n("preinc", g3, _v(vi, g3))
        stmts = [_n("expr", g0, _n("asg", g0, _v(vtotal, g0), _num(0, g0)))]
        if as_while:
            guarded.children.append(step)
            stmts += [_n("expr", g1, init), _n("while", g2, cond, guarded)]
        else:
            stmts += [_n("for", g1, init, cond, step, guarded)]
        stmts += [_n("return", g7, _v(vtotal, g6))]
        return _n("block", g0, *stmts)

    stripped = make(("$i", "$total", "$n", "$arr"), divergent, want_temp)
    debug = make((i, total, n, arr), False, False)
    roles: dict[str, str | None] = {"$i": i, "$total": total, "$n": n, "$arr": arr}
    if want_temp:
        roles["$t"] = None
    fn = rng.choice(["sum_pos", "count_pos", "filter_sum", "tally_pos"])
    return _TemplateOut(stripped, debug, roles, fn, divergent or want_temp)


_TEMPLATES = (
    _t_count_loop,
    _t_array_sum,
    _t_call_wrapper,
    _t_copy_loop,
    _t_select_max,
    _t_scaled_add,
    _t_guarded_sum,
)

TEMPLATE_COUNT = len(_TEMPLATES)


def generate_pair(seed: int, template_id: int) -> GeneratedPair:
    """Build one stripped/debug pair with ground truth. Deterministic in
    (seed, template_id)."""
    if not 0 <= template_id < TEMPLATE_COUNT:
        raise ValueError(f"unknown template_id {template_id}; have {TEMPLATE_COUNT}")
    rng = random.Random(seed * 1_000_003 + template_id)
    ab = _Addr()
    divergent = rng.random() < DIVERGENCE_PROB
    want_temp = rng.random() < TEMPORARY_PROB
    out = _TEMPLATES[template_id](rng, ab, divergent, want_temp)

    collided_roles: list[str] = []
    if rng.random() < COLLISION_PROB:
        # One instruction copying between two otherwise-unmentioned
        # variables: both sides share the signature {h}.
        h = ab()
        used_devs = {d for d in out.roles.values() if d}
        ca = _pick(rng, _SPARE, used_devs)
        cb = _pick(rng, _SPARE, used_devs)
        out.stripped.children.append(
            _n("expr", h, _n("asg", h, _v("$coll_a", h), _v("$coll_b", h))))
        out.debug.children.append(
            _n("expr", h, _n("asg", h, _v(ca, h), _v(cb, h))))
        out.roles["$coll_a"] = None
        out.roles["$coll_b"] = None
        collided_roles = ["$coll_a", "$coll_b"]

    naming = _rename_stripped(out.stripped)
    mapping = {
        naming[role]: dev
        for role, dev in out.roles.items()
        if dev is not None and role not in collided_roles
    }
    temporaries = frozenset(
        naming[role]
        for role, dev in out.roles.items()
        if dev is None and role not in collided_roles
    )
    collided = frozenset(naming[role] for role in collided_roles)

    stripped = _finalize(out.fn_name, out.stripped)
    debug = _finalize(out.fn_name, out.debug)
    truth = PairTruth(mapping, temporaries, collided, out.divergent)
    _check_signatures(stripped, debug, truth)
    return GeneratedPair(stripped, debug, truth)


def _check_signatures(stripped: Ast, debug: Ast, truth: PairTruth) -> None:
    """Generator self-check: signatures are unique except injected collisions."""
    for side, ast, allowed in (("stripped", stripped, truth.collided), ("debug", debug, None)):
        by_sig: dict[frozenset[int], list[str]] = {}
        for name, sig in extract_signatures(ast).items():
            by_sig.setdefault(sig, []).append(name)
        for sig, names in by_sig.items():
            if len(names) > 1:
                if side == "stripped" and set(names) == set(truth.collided):
                    continue
                if side == "debug" and len(names) == 2 and truth.has_collision:
                    continue
                raise AssertionError(
                    f"accidental signature collision on {side} side: {names}"
                )


def generate_corpus(
    seed: int,
    n_templates: int,
    n_functions: int,
    functions_per_binary: int = FUNCTIONS_PER_BINARY,
) -> list[CorpusEntry]:
    """Generate `n_functions` accepted corpus entries grouped into binaries."""
    if n_templates < 1:
        raise ValueError("need at least one template")
    n_templates = min(n_templates, TEMPLATE_COUNT)
    entries: list[CorpusEntry] = []
    index = 0
    while len(entries) < n_functions:
        rng = random.Random((seed << 20) ^ index)
        template_id = rng.randrange(n_templates)
        pair = generate_pair(seed * 70_001 + index, template_id)
        accepted = len(entries)
        entry = build_corpus_entry(
            pair.stripped,
            pair.debug,
            binary_id=f"bin{accepted // functions_per_binary:04d}",
            function_id=f"fn{accepted:05d}",
        )
        index += 1
        if isinstance(entry, Rejection):
            continue
        entries.append(entry)
    return entries


def generate_pairs(seed: int, count: int, n_templates: int = TEMPLATE_COUNT) -> list[GeneratedPair]:
    """Convenience batch of pairs cycling over templates deterministically."""
    n_templates = min(n_templates, TEMPLATE_COUNT)
    return [generate_pair(seed * 9_176 + i, i % n_templates) for i in range(count)]
