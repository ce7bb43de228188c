"""Catalog of distinct link-pair geometries on the 4x4 reference grid.

The shipped JSON lists every canonical pair geometry with its repetition
count, plus a hand-editable table of reference rows (measured / model
correlations) keyed by geometry id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .geometry import DEFAULT_TOLERANCE_M, Deployment, LinkPairGeometry, geometry_classes, grid_deployment

CATALOG_FILE = "catalog_4x4.json"


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    id: str
    geometry: LinkPairGeometry
    n_pairs: int

    @property
    def has_common_node(self) -> bool:
        return self.geometry.common_node() is not None

    @property
    def endpoint_separation(self) -> float | None:
        """Distance between the non-shared endpoints, for common-node pairs."""
        cn = self.geometry.common_node()
        return None if cn is None else float(np.linalg.norm(cn[1] - cn[2]))


@dataclass(frozen=True)
class ReferenceRow:
    row: int
    geometry_id: str
    measured: float
    proposed: float
    gudmundson: float | None
    confidence: str = "best-effort"


@dataclass(frozen=True, eq=False)
class GeometryCatalog:
    deployment: Deployment
    entries: list
    reference_rows: list
    prototypes: dict

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.id: e for e in self.entries})

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, gid) -> CatalogEntry:
        try:
            return self._by_id[gid]
        except KeyError:
            raise ConfigError(f"unknown geometry id {gid!r}") from None

    def prototype(self, name: str) -> CatalogEntry:
        if name not in self.prototypes:
            raise ConfigError(f"unknown prototype {name!r}; have {sorted(self.prototypes)}")
        return self[self.prototypes[name]]

    def reference_entries(self) -> list[CatalogEntry]:
        return [self[r.geometry_id] for r in self.reference_rows]

    def to_json(self) -> dict:
        return {
            "deployment": self.deployment.to_json(),
            "geometries": [
                {
                    "id": e.id,
                    "coords_m": [[round(float(v), 9) for v in p] for p in e.geometry.coords],
                    "n_pairs": e.n_pairs,
                    "common_node": e.has_common_node,
                    "endpoint_separation_m": None if e.endpoint_separation is None else round(e.endpoint_separation, 9),
                }
                for e in self.entries
            ],
            "reference_rows": [
                {
                    "row": r.row,
                    "geometry_id": r.geometry_id,
                    "measured": r.measured,
                    "proposed": r.proposed,
                    "gudmundson": r.gudmundson,
                    "confidence": r.confidence,
                }
                for r in self.reference_rows
            ],
            "prototypes": dict(self.prototypes),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def from_json(cls, obj) -> "GeometryCatalog":
        try:
            dep = Deployment.from_json(obj["deployment"])
            entries = [
                CatalogEntry(g["id"], LinkPairGeometry(np.array(g["coords_m"], dtype=float)), int(g["n_pairs"]))
                for g in obj["geometries"]
            ]
            refs = [
                ReferenceRow(int(r["row"]), r["geometry_id"], float(r["measured"]), float(r["proposed"]),
                             None if r.get("gudmundson") is None else float(r["gudmundson"]),
                             r.get("confidence", "best-effort"))
                for r in obj.get("reference_rows", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed geometry catalog: {exc}", line=None) from exc
        cat = cls(dep, entries, refs, dict(obj.get("prototypes", {})))
        for r in refs:
            cat[r.geometry_id]
        return cat

    @classmethod
    def load(cls, path=None) -> "GeometryCatalog":
        if path is None:
            text = resources.files("linkshadow").joinpath("data").joinpath(CATALOG_FILE).read_text()
        else:
            text = Path(path).read_text()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from exc
        return cls.from_json(obj)


def build_catalog(dep: Deployment | None = None, tolerance=DEFAULT_TOLERANCE_M) -> GeometryCatalog:
    """Enumerate all distinct pair geometries of ``dep`` (default 4x4 grid, 1.22 m)."""
    dep = grid_deployment() if dep is None else dep
    classes = geometry_classes(dep, tolerance)
    entries = []
    for k, key in enumerate(sorted(classes)):
        a, b = classes[key][0]
        g = LinkPairGeometry.from_links(dep, a, b, tolerance).canonical()
        entries.append(CatalogEntry(f"G{k + 1:03d}", g, len(classes[key])))
    return GeometryCatalog(dep, entries, [], {})


def load_catalog(path=None) -> GeometryCatalog:
    return GeometryCatalog.load(path)
