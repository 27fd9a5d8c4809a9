"""Parsing and serialization: networks, evidence, deletion plans, reports.

The canonical network document is a line-oriented text format the toolkit
fully controls:

    kind: original                # optional; default original
    variables:
      A a0 a1
      B b0 b1
    cpts:
      A : 0.3 0.7
      B | A : 0.2 0.8 0.9 0.1
    edges:                        # registry; only for non-original kinds
      A A__clone0 B -
      C C__clone1 D C__se1

CPT tables are flat in the model index convention (child fastest, first
parent most significant).  '#' starts a comment anywhere; blank lines are
ignored.  Serialization uses repr() floats so a parse of a serialize is
structurally identical to the source network.

A restricted reader for the Hugin ``.net`` format is also provided: node
blocks with ``states`` and potential blocks with dense ``data`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deletion import DeletionPlan, EdgeParams
from .model import Cpt, EdgeRecord, Evidence, ModelError, Network, Variable

REPORT_COLUMNS = (
    "network",
    "instance",
    "method",
    "selection",
    "edges_deleted",
    "iterations",
    "converged",
    "kl_bound",
    "exact_kl",
    "map_ratio",
    "constrained_treewidth",
    "wall_time_ms",
)

METHOD_TAGS = ("ed-bp", "ed-kl")
SELECTION_TAGS = ("rand", "guided", "mi")


class FormatError(ModelError):
    """Positioned syntax or semantic error in a text document."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}"
            if col is not None:
                where += f", col {col}"
            where += ": "
        super().__init__(where + message)


def _logical_lines(text: str):
    """(line_number, stripped_content) for non-blank, non-comment lines."""
    for i, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].rstrip()
        if content.strip():
            yield i, content.strip()


def parse_network(text: str) -> Network:
    """Parse the canonical document format into a validated-shape Network."""
    kind = "original"
    section = None
    var_lines: list[tuple[int, str]] = []
    cpt_lines: list[tuple[int, str]] = []
    edge_lines: list[tuple[int, str]] = []
    seen_kind = False
    for ln, content in _logical_lines(text):
        low = content.lower()
        if low.startswith("kind:"):
            if section is not None or seen_kind:
                raise FormatError("kind must appear once, before any section", ln, 1)
            kind = content.split(":", 1)[1].strip()
            seen_kind = True
        elif low == "variables:":
            section = "variables"
        elif low == "cpts:":
            section = "cpts"
        elif low == "edges:":
            section = "edges"
        elif section == "variables":
            var_lines.append((ln, content))
        elif section == "cpts":
            cpt_lines.append((ln, content))
        elif section == "edges":
            edge_lines.append((ln, content))
        else:
            raise FormatError(f"unexpected content outside any section: {content!r}", ln, 1)
    if not var_lines:
        raise FormatError("document declares no variables")

    variables: list[Variable] = []
    by_name: dict[str, Variable] = {}
    for ln, content in var_lines:
        tokens = content.split()
        if len(tokens) < 2:
            raise FormatError("variable line needs a name and at least one state", ln, 1)
        name, states = tokens[0], tuple(tokens[1:])
        if name in by_name:
            raise FormatError(f"duplicate variable {name!r}", ln, 1)
        var = Variable(name, states)
        variables.append(var)
        by_name[name] = var

    cpts: list[Cpt] = []
    for ln, content in cpt_lines:
        if ":" not in content:
            raise FormatError("cpt line needs a ':' before the table", ln, 1)
        head, _, tail = content.partition(":")
        head = head.strip()
        if "|" in head:
            child_tok, _, parent_tok = head.partition("|")
            child_name = child_tok.strip()
            parent_names = parent_tok.split()
        else:
            child_name = head.strip()
            parent_names = []
        if not child_name or len(child_name.split()) != 1:
            raise FormatError("cpt line needs exactly one child name", ln, 1)
        if child_name not in by_name:
            raise FormatError(f"cpt for unknown variable {child_name!r}", ln, 1)
        parents = []
        for p in parent_names:
            if p not in by_name:
                raise FormatError(
                    f"cpt for {child_name!r}: unknown parent {p!r}", ln, 1
                )
            parents.append(by_name[p])
        values = []
        for tok in tail.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise FormatError(
                    f"cpt for {child_name!r}: bad number {tok!r}", ln, 1
                ) from None
        try:
            cpts.append(Cpt(by_name[child_name], tuple(parents), values))
        except ModelError as exc:
            raise FormatError(str(exc), ln, 1) from None

    records: list[EdgeRecord] = []
    for ln, content in edge_lines:
        tokens = content.split()
        if len(tokens) != 4:
            raise FormatError(
                "edge line needs: parent clone child sevid-or-dash", ln, 1
            )
        parent, clone, child, sevid = tokens
        records.append(
            EdgeRecord(parent, clone, child, None if sevid == "-" else sevid)
        )

    try:
        return Network(variables, cpts, kind=kind, clone_edges=tuple(records))
    except ModelError as exc:
        raise FormatError(str(exc)) from None


def serialize_network(net: Network) -> str:
    lines = []
    if net.kind != "original":
        lines.append(f"kind: {net.kind}")
    lines.append("variables:")
    for v in net.variables:
        lines.append(f"  {v.name} " + " ".join(v.states))
    lines.append("cpts:")
    for v in net.variables:
        cpt = net.cpt(v.name)
        table = " ".join(repr(float(x)) for x in cpt.table)
        if cpt.parents:
            parents = " ".join(p.name for p in cpt.parents)
            lines.append(f"  {v.name} | {parents} : {table}")
        else:
            lines.append(f"  {v.name} : {table}")
    if net.clone_edges:
        lines.append("edges:")
        for r in net.clone_edges:
            sevid = r.sevid if r.sevid is not None else "-"
            lines.append(f"  {r.parent} {r.clone} {r.child} {sevid}")
    return "\n".join(lines) + "\n"


def parse_evidence(text: str, net: Network) -> Evidence:
    """One 'variable = state' pair per line; '#' comments."""
    assignments: dict[str, str] = {}
    for ln, content in _logical_lines(text):
        if "=" not in content:
            raise FormatError("evidence line needs 'variable = state'", ln, 1)
        name, _, state = content.partition("=")
        name, state = name.strip(), state.strip()
        if not name or not state:
            raise FormatError("evidence line needs 'variable = state'", ln, 1)
        if name in assignments:
            raise FormatError(f"variable {name!r} assigned twice", ln, 1)
        if not net.has_var(name):
            raise FormatError(f"unknown variable {name!r}", ln, 1)
        try:
            net.var(name).index_of(state)
        except ModelError as exc:
            raise FormatError(str(exc), ln, 1) from None
        assignments[name] = state
    return Evidence(assignments)


def serialize_evidence(ev: Evidence) -> str:
    return "".join(f"{k} = {v}\n" for k, v in ev.items())


@dataclass(frozen=True)
class PlanEdgeSpec:
    """One parsed deletion-plan line: a source edge and optional parameters."""

    parent: str
    child: str
    pm: tuple[float, ...] | None
    se: tuple[float, ...] | None


def parse_plan(text: str) -> list[PlanEdgeSpec]:
    """One deleted edge per line: 'parent -> child [| pm: ... | se: ...]'."""
    out = []
    for ln, content in _logical_lines(text):
        head, *rest = [part.strip() for part in content.split("|")]
        if "->" not in head:
            raise FormatError("plan line needs 'parent -> child'", ln, 1)
        parent, _, child = head.partition("->")
        parent, child = parent.strip(), child.strip()
        if not parent or not child or len(parent.split()) != 1 or len(child.split()) != 1:
            raise FormatError("plan line needs 'parent -> child'", ln, 1)
        pm = se = None
        for part in rest:
            key, _, vals = part.partition(":")
            key = key.strip().lower()
            try:
                numbers = tuple(float(tok) for tok in vals.split())
            except ValueError:
                raise FormatError(f"bad number in {key!r} vector", ln, 1) from None
            if key == "pm":
                pm = numbers
            elif key == "se":
                se = numbers
            else:
                raise FormatError(f"unknown plan field {key!r}", ln, 1)
        if (pm is None) != (se is None):
            raise FormatError("plan line must give both pm and se or neither", ln, 1)
        out.append(PlanEdgeSpec(parent, child, pm, se))
    return out


def serialize_plan(plan: DeletionPlan) -> str:
    lines = []
    for rec, params in zip(plan.edges, plan.params):
        pm = " ".join(repr(float(x)) for x in params.pm)
        se = " ".join(repr(float(x)) for x in params.se)
        lines.append(f"{rec.parent} -> {rec.child} | pm: {pm} | se: {se}")
    return "\n".join(lines) + ("\n" if lines else "")


def plan_params_from_specs(specs: list[PlanEdgeSpec]) -> list[EdgeParams | None]:
    return [
        EdgeParams(np.array(s.pm), np.array(s.se)) if s.pm is not None else None
        for s in specs
    ]


@dataclass(frozen=True)
class ReportRow:
    network: str
    instance: int
    method: str
    selection: str
    edges_deleted: int
    iterations: int
    converged: bool
    kl_bound: float
    exact_kl: float | None
    map_ratio: float | None
    constrained_treewidth: int
    wall_time_ms: int

    def validate(self) -> None:
        if self.method not in METHOD_TAGS:
            raise ModelError(f"unknown method tag {self.method!r}")
        if self.selection not in SELECTION_TAGS:
            raise ModelError(f"unknown selection tag {self.selection!r}")
        if not (self.kl_bound >= 0.0):
            raise ModelError(f"kl_bound must be >= 0 (got {self.kl_bound!r})")
        if self.exact_kl is not None:
            if not (self.exact_kl <= self.kl_bound + 1e-9):
                raise ModelError(
                    f"exact_kl {self.exact_kl!r} exceeds kl_bound {self.kl_bound!r}"
                )
        if self.map_ratio is not None:
            if not (0.0 < self.map_ratio <= 1.0):
                raise ModelError(f"map_ratio must be in (0, 1] (got {self.map_ratio!r})")


def _render_float(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf"
    return format(float(x), ".12g")


def render_report(rows) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for row in rows:
        row.validate()
        lines.append(
            ",".join(
                (
                    row.network,
                    str(row.instance),
                    row.method,
                    row.selection,
                    str(row.edges_deleted),
                    str(row.iterations),
                    "true" if row.converged else "false",
                    _render_float(row.kl_bound),
                    _render_float(row.exact_kl),
                    _render_float(row.map_ratio),
                    str(row.constrained_treewidth),
                    str(row.wall_time_ms),
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_report(rows, sink) -> int:
    """Write CSV rows to a binary or text sink; returns the byte count."""
    payload = render_report(rows)
    data = payload.encode("utf-8")
    if hasattr(sink, "buffer"):
        sink = sink.buffer
    try:
        written = sink.write(data)
    except TypeError:
        written = sink.write(payload)
        return len(data)
    return written if written is not None else len(data)


# --- Hugin .net subset -----------------------------------------------------


class _HuginTokens:
    def __init__(self, text: str):
        self.tokens: list[tuple[str, str, int]] = []
        line = 1
        i = 0
        n = len(text)
        while i < n:
            c = text[i]
            if c == "\n":
                line += 1
                i += 1
            elif c.isspace():
                i += 1
            elif c == "%":
                while i < n and text[i] != "\n":
                    i += 1
            elif c == '"':
                j = i + 1
                while j < n and text[j] != '"':
                    if text[j] == "\n":
                        line += 1
                    j += 1
                if j >= n:
                    raise FormatError("unterminated string", line)
                self.tokens.append(("str", text[i + 1 : j], line))
                i = j + 1
            elif c in "{}()=;|":
                self.tokens.append(("sym", c, line))
                i += 1
            else:
                j = i
                while j < n and not text[j].isspace() and text[j] not in '{}()=;|%"':
                    j += 1
                self.tokens.append(("word", text[i:j], line))
                i = j
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", "", -1)

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.next()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise FormatError(f"expected {want!r}, found {tok[1]!r}", tok[2])
        return tok


def _hugin_value(toks: _HuginTokens):
    """A value: string, word/number, or a parenthesized list (flattened)."""
    kind, value, line = toks.next()
    if kind == "sym" and value == "(":
        items = []
        while True:
            k, v, ln = toks.peek()
            if k == "sym" and v == ")":
                toks.next()
                return items
            items.append(_hugin_value(toks))
    if kind in ("str", "word"):
        return value
    raise FormatError(f"unexpected token {value!r}", line)


def _flatten(value, out: list):
    if isinstance(value, list):
        for item in value:
            _flatten(item, out)
    else:
        out.append(value)


def parse_hugin_subset(text: str) -> Network:
    """Read the supported Hugin subset: discrete nodes plus dense potentials.

    Data is flattened in the Hugin order, which matches the model convention
    (first parent most significant, child fastest).  Any construct outside
    the subset raises an unsupported-feature error naming it.
    """
    toks = _HuginTokens(text)
    node_order: list[str] = []
    states: dict[str, tuple[str, ...]] = {}
    potentials: dict[str, tuple[list[str], list[float], int]] = {}
    while True:
        kind, value, line = toks.peek()
        if kind == "eof":
            break
        if kind != "word":
            raise FormatError(f"unexpected token {value!r}", line)
        if value == "net":
            toks.next()
            _skip_block(toks)
        elif value == "node":
            toks.next()
            name = toks.expect("word")[1]
            if name in states:
                raise FormatError(f"duplicate node {name!r}", line)
            block = _read_block(toks)
            if "states" not in block:
                raise FormatError(f"node {name!r} has no states", line)
            labels = []
            _flatten(block["states"], labels)
            states[name] = tuple(str(s) for s in labels)
            node_order.append(name)
        elif value == "potential":
            toks.next()
            toks.expect("sym", "(")
            child = toks.expect("word")[1]
            parents: list[str] = []
            k, v, ln = toks.peek()
            if k == "sym" and v == "|":
                toks.next()
                while True:
                    k, v, ln = toks.peek()
                    if k == "sym" and v == ")":
                        break
                    parents.append(toks.expect("word")[1])
            toks.expect("sym", ")")
            block = _read_block(toks)
            if "data" not in block:
                raise FormatError(f"potential for {child!r} has no data", line)
            flat: list = []
            _flatten(block["data"], flat)
            try:
                data = [float(x) for x in flat]
            except ValueError:
                raise FormatError(
                    f"potential for {child!r}: non-numeric data", line
                ) from None
            if child in potentials:
                raise FormatError(f"duplicate potential for {child!r}", line)
            potentials[child] = (parents, data, line)
        else:
            raise FormatError(f"unsupported feature: {value!r}", line)

    variables = []
    by_name: dict[str, Variable] = {}
    for name in node_order:
        try:
            var = Variable(name, states[name])
        except ModelError as exc:
            raise FormatError(f"node {name!r}: {exc}") from None
        variables.append(var)
        by_name[name] = var
    cpts = []
    for name in node_order:
        if name not in potentials:
            raise FormatError(f"node {name!r} has no potential")
        parents, data, line = potentials[name]
        for p in parents:
            if p not in by_name:
                raise FormatError(f"potential for {name!r}: unknown parent {p!r}", line)
        try:
            cpts.append(Cpt(by_name[name], tuple(by_name[p] for p in parents), data))
        except ModelError as exc:
            raise FormatError(str(exc), line) from None
    extra = [n for n in potentials if n not in states]
    if extra:
        raise FormatError(f"potential for unknown node {extra[0]!r}")
    try:
        return Network(variables, cpts)
    except ModelError as exc:
        raise FormatError(str(exc)) from None


def _read_block(toks: _HuginTokens) -> dict:
    """Read '{ key = value; ... }'; unknown keys are tolerated and kept."""
    toks.expect("sym", "{")
    out: dict = {}
    while True:
        kind, value, line = toks.peek()
        if kind == "sym" and value == "}":
            toks.next()
            return out
        if kind == "eof":
            raise FormatError("unterminated block", line)
        key = toks.expect("word")[1]
        toks.expect("sym", "=")
        val = _hugin_value(toks)
        toks.expect("sym", ";")
        out[key] = val


def _skip_block(toks: _HuginTokens) -> None:
    toks.expect("sym", "{")
    depth = 1
    while depth:
        kind, value, line = toks.next()
        if kind == "eof":
            raise FormatError("unterminated block", line)
        if kind == "sym" and value == "{":
            depth += 1
        elif kind == "sym" and value == "}":
            depth -= 1
