"""Learned causal graph extraction, thresholding, and export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .evaluation import HitMap
from .model import ModelConfig, ModelParams, condition_maps
from .numerics import DegenerateInputError


@dataclass
class LatentGraph:
    """Thresholded adjacency over the responsive latents.

    ``adjacency[i, j]`` is the averaged absolute weight of edge j -> i
    (strictly lower triangular, hence acyclic by construction).
    """

    adjacency: np.ndarray
    tau: float
    edges: list[tuple[int, int, float]]  # (parent, child, weight)
    signed_adjacency: np.ndarray | None = None
    program_assignment: dict[int, int] = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return len(self.edges)

    @property
    def n_pruned(self) -> int:
        d = self.adjacency.shape[0]
        return d * (d - 1) // 2 - len(self.edges)


def extract_adjacency(
    params: ModelParams, config: ModelConfig, environments: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean absolute (and mean signed) responsive-block weights over the
    given condition vectors."""
    environments = np.atleast_2d(np.asarray(environments, dtype=float))
    lam_vv, _, _ = condition_maps(params, config, environments)
    return np.mean(np.abs(lam_vv), axis=0), np.mean(lam_vv, axis=0)


def threshold_graph(
    adjacency: np.ndarray,
    tau: float = 0.25,
    signed_adjacency: np.ndarray | None = None,
) -> LatentGraph:
    """Keep strictly-lower entries with magnitude at least ``tau``."""
    adjacency = np.asarray(adjacency, dtype=float)
    if tau < 0:
        raise DegenerateInputError("threshold must be nonnegative")
    d = adjacency.shape[0]
    edges = [
        (j, i, float(adjacency[i, j]))
        for i in range(d)
        for j in range(i)
        if adjacency[i, j] >= tau
    ]
    return LatentGraph(
        adjacency=adjacency, tau=tau, edges=edges, signed_adjacency=signed_adjacency
    )


def assign_programs(hit_map: HitMap) -> dict[int, int]:
    """Each latent component maps to the perturbation with the largest
    response magnitude; ties break toward the lowest perturbation index."""
    assignment: dict[int, int] = {}
    mags = hit_map.magnitudes
    for comp in range(mags.shape[0]):
        best = int(np.argmax(mags[comp]))  # argmax returns the first maximum
        assignment[comp] = hit_map.condition_ids[best]
    return assignment


def export_graph(graph: LatentGraph, labels: list[str], fmt: str = "json") -> str:
    """Render the graph as a DOT digraph or a JSON edge list."""
    d = graph.adjacency.shape[0]
    if len(labels) != d:
        raise DegenerateInputError(f"need {d} labels, got {len(labels)}")
    if fmt == "dot":
        lines = ["digraph latent_programs {"]
        for label in labels:
            lines.append(f'  "{label}";')
        for parent, child, weight in graph.edges:
            lines.append(f'  "{labels[parent]}" -> "{labels[child]}" [weight={weight:.6g}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "tau": graph.tau,
            "nodes": list(labels),
            "edges": [
                {"parent": labels[p], "child": labels[c], "weight": w}
                for p, c, w in graph.edges
            ],
            "adjacency": graph.adjacency.tolist(),
            "signed_adjacency": (
                graph.signed_adjacency.tolist() if graph.signed_adjacency is not None else None
            ),
            "program_assignment": {str(k): v for k, v in graph.program_assignment.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    raise DegenerateInputError(f"unknown export format: {fmt!r}")


def parse_graph_json(text: str) -> LatentGraph:
    doc = json.loads(text)
    labels = {name: i for i, name in enumerate(doc["nodes"])}
    edges = [
        (labels[e["parent"]], labels[e["child"]], float(e["weight"])) for e in doc["edges"]
    ]
    return LatentGraph(
        adjacency=np.array(doc["adjacency"], dtype=float),
        tau=float(doc["tau"]),
        edges=edges,
        signed_adjacency=(
            np.array(doc["signed_adjacency"], dtype=float)
            if doc.get("signed_adjacency") is not None
            else None
        ),
        program_assignment={int(k): int(v) for k, v in doc.get("program_assignment", {}).items()},
    )


def edge_jaccard(edges_a: set[tuple[int, int]], edges_b: set[tuple[int, int]]) -> float:
    """Support overlap between two edge sets (1.0 when both are empty)."""
    union = edges_a | edges_b
    if not union:
        return 1.0
    return len(edges_a & edges_b) / len(union)
