"""Graphviz rendering of a weighted join tree."""

from __future__ import annotations

from cipmc.heuristic import NEG_INF, WeightedJoinTree, show


def _esc(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(tree: WeightedJoinTree, name: str = "jointree") -> str:
    lines = [f"digraph {name} {{", "  node [shape=box, fontname=monospace];"]
    ids: dict[int, str] = {}

    def visit(node, dashed: bool) -> str:
        nid = f"n{len(ids)}"
        ids[id(node)] = nid
        dashed = dashed or node.weight == NEG_INF
        style = ', style="dashed"' if dashed else ""
        lines.append(f'  {nid} [label="{_esc(node.summary)}\\n{show(node.weight)}"{style}];')
        for e in node.edges:
            cid = visit(e.child, dashed)
            estyle = ', style="dashed"' if dashed or e.child.weight == NEG_INF else ""
            lines.append(f'  {nid} -> {cid} [label="{show(e.weight)}"{estyle}];')
        return nid

    visit(tree.root, False)
    lines.append("}")
    return "\n".join(lines) + "\n"
