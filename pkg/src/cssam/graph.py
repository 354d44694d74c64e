"""Code semantic representation graphs.

A snippet's AST is folded into a compact graph by merging nodes that share
the same (kind, label) attributes, then def-use data-flow edges are layered
on top. AST-derived edges carry weight 0.4 and data-flow edges 0.6; both are
directed (parent→child and definition→use respectively).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .corpus import TokenSequence, tokenize_code
from .errors import GraphError
from .parsers import Ast

AST_EDGE = "AST"
DFG_EDGE = "DFG"
AST_WEIGHT = 0.4
DFG_WEIGHT = 0.6
DEFAULT_MAX_NODES = 80


def node_key(kind: str, label: str) -> str:
    """Stable string identity for a merged node, shared across graphs."""
    return f"{kind}::{label}"


@dataclass
class CsrgNode:
    kind: str
    label: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.kind, self.label)

    @property
    def key_string(self) -> str:
        return node_key(self.kind, self.label)

    def label_tokens(self) -> TokenSequence:
        return tokenize_code(self.label)


@dataclass
class CsrgEdge:
    src: int
    dst: int
    type: str
    weight: float


@dataclass
class Csrg:
    nodes: list[CsrgNode] = field(default_factory=list)
    edges: list[CsrgEdge] = field(default_factory=list)
    root: int = 0

    def key_strings(self) -> list[str]:
        return [n.key_string for n in self.nodes]

    def out_adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.nodes]
        for e in self.edges:
            adj[e.src].append(e.dst)
        return adj

    # -- serialization -------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "nodes": [{"kind": n.kind, "label": n.label} for n in self.nodes],
            "edges": [
                {"src": e.src, "dst": e.dst, "type": e.type, "weight": e.weight}
                for e in self.edges
            ],
            "root": self.root,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, data: dict) -> "Csrg":
        try:
            nodes = [CsrgNode(d["kind"], d["label"]) for d in data["nodes"]]
            edges = [
                CsrgEdge(d["src"], d["dst"], d["type"], float(d["weight"]))
                for d in data["edges"]
            ]
            root = int(data["root"])
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph record: {exc}") from exc
        return cls(nodes=nodes, edges=edges, root=root)

    @classmethod
    def from_json(cls, text: str) -> "Csrg":
        return cls.from_json_dict(json.loads(text))

    def to_dot(self) -> str:
        lines = ["digraph csrg {", "  rankdir=TB;"]
        for i, n in enumerate(self.nodes):
            label = f"{n.kind}\\n{n.label}".replace('"', '\\"')
            shape = "box" if n.kind == n.label else "ellipse"
            lines.append(f'  n{i} [label="{label}", shape={shape}];')
        for e in self.edges:
            style = ', style=dashed, color=blue' if e.type == DFG_EDGE else ""
            lines.append(f'  n{e.src} -> n{e.dst} [label="{e.weight:g}"{style}];')
        lines.append("}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Def-use data-flow extraction
#
# A single linear pass over the tree in source order. An environment maps each
# variable name to the leaf index of its most recent definition. Two kinds of
# edges are emitted:
#   * def→use — from a name's most recent definition to each later read;
#   * flow-into-target — when an assignment's (or initializer's) right side
#     reads variables, from each read's definition to the freshly defined
#     target, carrying the value across names.
# Branches and loops are handled by the same linear rule (no path
# sensitivity). Only the second kind connects distinct names, so after node
# merging it is what keeps data flow visible in the graph.

_SKIP_KINDS = frozenset({"type", "import_declaration"})
_NAMED_DECLS = frozenset({"method_declaration", "constructor_declaration", "class_declaration"})
_ASSIGN_KINDS = frozenset({"assignment", "assignment_expression"})


def extract_dfg(ast: Ast) -> list[tuple[int, int]]:
    edges: list[tuple[int, int]] = []
    env: dict[str, int] = {}
    collectors: list[list[int]] = []  # defs feeding the enclosing target

    def define(idx: int):
        env[ast.nodes[idx].label] = idx

    def use(idx: int):
        name = ast.nodes[idx].label
        src = env.get(name)
        if src is not None and src != idx:
            edges.append((src, idx))
            if collectors:
                collectors[-1].append(src)

    def collect_value(child_indices: list[int]) -> list[int]:
        collectors.append([])
        for c in child_indices:
            visit(c)
        sources = collectors.pop()
        if collectors:
            collectors[-1].extend(sources)  # nested values feed outer targets
        out, seen = [], set()
        for s in sources:
            if s not in seen:
                seen.add(s)
                out.append(s)
        return out

    def flow_into(target: int, sources: list[int]):
        for src in sources:
            if src != target:
                edges.append((src, target))

    def ident_children(idx: int) -> list[int]:
        return [c for c in ast.children(idx) if ast.nodes[c].kind == "identifier"]

    def visit(idx: int):
        node = ast.nodes[idx]
        kind = node.kind
        if kind in _SKIP_KINDS:
            return
        if ast.is_leaf(idx):
            if kind == "identifier":
                use(idx)
            return
        kids = ast.children(idx)
        if kind in _ASSIGN_KINDS:
            # children are [target..., op, value...]; evaluate the value
            # first so `a = a + 1` binds the read to the previous definition
            op_pos = next(
                (p for p, c in enumerate(kids)
                 if ast.nodes[c].kind == "operator" and ast.nodes[c].label.endswith("=")
                 and ast.nodes[c].label not in ("==", "!=", "<=", ">=")),
                None,
            )
            if op_pos is None:
                for c in kids:
                    visit(c)
                return
            target, op, value = kids[:op_pos], ast.nodes[kids[op_pos]], kids[op_pos + 1:]
            sources = collect_value(value)
            if len(target) == 1 and ast.nodes[target[0]].kind == "identifier":
                if op.label != "=":
                    use(target[0])  # compound assignment reads before writing
                define(target[0])
                flow_into(target[0], sources)
            else:
                for c in target:
                    visit(c)  # a[i] = v, obj.f = v: index/receiver are reads
            return
        if kind == "variable_declarator":
            sources = collect_value(kids[1:])
            define(kids[0])
            flow_into(kids[0], sources)
            return
        if kind == "parameter":
            for c in kids:
                if ast.nodes[c].kind == "identifier":
                    define(c)
                else:
                    visit(c)
            return
        if kind in _NAMED_DECLS:
            skipped_name = False
            for c in kids:
                if not skipped_name and ast.nodes[c].kind == "identifier":
                    skipped_name = True  # the declared name, not a variable
                    continue
                visit(c)
            return
        if kind in ("method_invocation", "call_expression"):
            # the callee identifier right before the argument list is a name
            # lookup, not a data read; receivers and arguments are reads
            callee = None
            for p, c in enumerate(kids):
                nxt = kids[p + 1] if p + 1 < len(kids) else None
                at_args = nxt is not None and (
                    ast.nodes[nxt].kind == "argument_list"
                    or (ast.nodes[nxt].kind == "operator" and ast.nodes[nxt].label == "(")
                )
                if ast.nodes[c].kind == "identifier" and at_args:
                    callee = c
                    break
            for c in kids:
                if c != callee:
                    visit(c)
            return
        if kind == "field_access":
            for c in kids[:-1]:
                visit(c)  # the trailing identifier is a member name
            return
        if kind == "update_expression":
            for c in kids:
                visit(c)
            for c in ident_children(idx):
                define(c)  # x++ writes x back after the read
            return
        for c in kids:
            visit(c)

    visit(ast.root)
    return edges


# ---------------------------------------------------------------------------
# Graph construction

def build_csrg(
    ast: Ast,
    dfg: list[tuple[int, int]] | None = None,
    ast_weight: float = AST_WEIGHT,
    dfg_weight: float = DFG_WEIGHT,
) -> Csrg:
    """Merge AST nodes by (kind, label) and overlay def-use edges.

    Merging collapses duplicate edges and drops any self-loop it creates,
    for data-flow edges as well as tree edges.
    """
    if dfg is None:
        dfg = extract_dfg(ast)
    index_of: dict[tuple[str, str], int] = {}
    remap: list[int] = []
    nodes: list[CsrgNode] = []
    for node in ast.nodes:
        key = (node.kind, node.label)
        merged = index_of.get(key)
        if merged is None:
            merged = len(nodes)
            index_of[key] = merged
            nodes.append(CsrgNode(node.kind, node.label))
        remap.append(merged)

    edges: list[CsrgEdge] = []
    seen: set[tuple[int, int, str]] = set()

    def add(src: int, dst: int, etype: str, weight: float):
        if src == dst:
            return
        sig = (src, dst, etype)
        if sig in seen:
            return
        seen.add(sig)
        edges.append(CsrgEdge(src, dst, etype, weight))

    for parent, child in ast.edges:
        add(remap[parent], remap[child], AST_EDGE, ast_weight)
    for src, dst in dfg:
        if not (0 <= src < len(ast.nodes) and 0 <= dst < len(ast.nodes)):
            raise GraphError(
                f"data-flow edge ({src}, {dst}) references a node outside the tree"
            )
        add(remap[src], remap[dst], DFG_EDGE, dfg_weight)
    return Csrg(nodes=nodes, edges=edges, root=remap[ast.root])


def truncate_csrg(g: Csrg, max_nodes: int) -> Csrg:
    """Keep the ``max_nodes`` nodes nearest the root in breadth-first order."""
    if max_nodes < 1:
        raise GraphError(f"max_nodes must be >= 1, got {max_nodes}")
    if len(g.nodes) <= max_nodes:
        return g
    adj = g.out_adjacency()
    order: list[int] = []
    seen = {g.root}
    queue = deque([g.root])
    while queue:
        cur = queue.popleft()
        order.append(cur)
        if len(order) == max_nodes:
            break
        for nxt in sorted(adj[cur]):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    kept = sorted(order)
    remap = {old: new for new, old in enumerate(kept)}
    nodes = [g.nodes[old] for old in kept]
    edges = [
        CsrgEdge(remap[e.src], remap[e.dst], e.type, e.weight)
        for e in g.edges
        if e.src in remap and e.dst in remap
    ]
    return Csrg(nodes=nodes, edges=edges, root=remap[g.root])


def build_graph(
    source: str,
    lang: str,
    max_nodes: int = DEFAULT_MAX_NODES,
    ast_weight: float = AST_WEIGHT,
    dfg_weight: float = DFG_WEIGHT,
) -> Csrg:
    """Parse, extract data flow, merge, and truncate in one call."""
    from .parsers import parse_ast

    ast = parse_ast(source, lang)
    return truncate_csrg(
        build_csrg(ast, extract_dfg(ast), ast_weight, dfg_weight), max_nodes
    )


# ---------------------------------------------------------------------------
# Corpus statistics

@dataclass
class CsrgStats:
    ast_nodes: list[int]
    csrg_nodes: list[int]
    dfg_edges: list[int]

    @property
    def mean_ast_nodes(self) -> float:
        return sum(self.ast_nodes) / len(self.ast_nodes) if self.ast_nodes else 0.0

    @property
    def mean_csrg_nodes(self) -> float:
        return sum(self.csrg_nodes) / len(self.csrg_nodes) if self.csrg_nodes else 0.0

    @property
    def mean_dfg_edges(self) -> float:
        return sum(self.dfg_edges) / len(self.dfg_edges) if self.dfg_edges else 0.0

    @property
    def reductions(self) -> list[float]:
        return [
            1.0 - (c / a) if a else 0.0
            for a, c in zip(self.ast_nodes, self.csrg_nodes)
        ]

    @property
    def mean_reduction(self) -> float:
        r = self.reductions
        return sum(r) / len(r) if r else 0.0

    def as_dict(self) -> dict:
        return {
            "snippets": len(self.ast_nodes),
            "mean_ast_nodes": self.mean_ast_nodes,
            "mean_csrg_nodes": self.mean_csrg_nodes,
            "mean_reduction": self.mean_reduction,
            "mean_dfg_edges": self.mean_dfg_edges,
        }


def csrg_stats(graphs: list[Csrg], asts: list[Ast]) -> CsrgStats:
    if len(graphs) != len(asts):
        raise GraphError(
            f"got {len(graphs)} graphs but {len(asts)} trees; the lists must be parallel"
        )
    return CsrgStats(
        ast_nodes=[len(a.nodes) for a in asts],
        csrg_nodes=[len(g.nodes) for g in graphs],
        dfg_edges=[sum(1 for e in g.edges if e.type == DFG_EDGE) for g in graphs],
    )
