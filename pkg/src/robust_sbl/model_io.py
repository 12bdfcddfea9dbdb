"""On-disk model format: a canonical JSON document with sparse weights.

Files are written with sorted keys and fixed indentation so that
write -> read -> write is byte-identical.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .glm import LINKS, GlmModel

SCHEMA_VERSION = 1


@dataclass
class ModelFile:
    link: str
    d_total: int
    weights: list  # [(index, value)] over active dimensions, indices increasing
    a_expect: list  # [(index, value)] matching the active dimensions
    metadata: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.d_total < 1:
            raise ValueError(f"d_total must be positive, got {self.d_total}")
        idx = [int(i) for i, _ in self.weights]
        if any(j <= i for i, j in zip(idx, idx[1:])):
            raise ValueError("weight indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.d_total):
            raise ValueError("weight indices must lie inside [0, d_total)")
        if [int(i) for i, _ in self.a_expect] != idx:
            raise ValueError("a_expect must cover exactly the active weight indices")

    @classmethod
    def from_fit(cls, state, report, link, task, estimator, sigma, epsilon, seed):
        active = np.flatnonzero(state.active.mask)
        trace = [float(v) for v in report.objective_trace[-10:]]
        metadata = {
            "estimator": estimator,
            "task": task,
            "sigma": float(sigma),
            "epsilon": epsilon if epsilon == "auto" else float(epsilon),
            "a_max": float(report.config.a_max),
            "max_outer_iters": int(report.config.max_outer_iters),
            "iterations": int(report.iterations_used),
            "converged": bool(report.converged),
            "final_objective": float(report.objective_trace[-1]),
            "objective_trace_tail": trace,
            "seed": int(seed),
        }
        return cls(
            link=link,
            d_total=int(state.w_star.shape[0]),
            weights=[(int(i), float(state.w_star[i])) for i in active],
            a_expect=[(int(i), float(state.a_expect[i])) for i in active],
            metadata=metadata,
        )

    def dense_weights(self):
        w = np.zeros(self.d_total)
        for i, v in self.weights:
            w[i] = v
        return w

    def glm_model(self):
        return GlmModel(link=self.link, w=self.dense_weights())

    def to_json(self):
        doc = asdict(self)
        doc["weights"] = [[int(i), float(v)] for i, v in self.weights]
        doc["a_expect"] = [[int(i), float(v)] for i, v in self.a_expect]
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {version!r}")
        return cls(
            link=doc["link"],
            d_total=int(doc["d_total"]),
            weights=[(int(i), float(v)) for i, v in doc["weights"]],
            a_expect=[(int(i), float(v)) for i, v in doc["a_expect"]],
            metadata=doc.get("metadata", {}),
            schema_version=version,
        )
