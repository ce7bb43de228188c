"""Per-geometry correlation report: measured, proposed model and baseline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

from .covariance import DEFAULT_QUADRATURE, QuadratureSpec, ShadowingParams, geometry_corr, total_fading_corr
from .errors import ArgumentError, DataError, ParseError
from .estimation import CorrelationRow, significance_stars
from .gudmundson import GudmundsonFit, fit_gudmundson

log = logging.getLogger(__name__)

COLUMNS = ("geometry_id", "L", "measured", "stars", "p_value", "proposed", "gudmundson")


@dataclass(frozen=True)
class ReportRow:
    geometry_id: str
    n_pairs: int
    measured: float
    p_value: float
    proposed: float
    gudmundson: float | None

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def build_report(rows: list[CorrelationRow], catalog, sp: ShadowingParams, d_ref: float,
                 q: QuadratureSpec = DEFAULT_QUADRATURE,
                 baseline_rows: list[CorrelationRow] | None = None) -> tuple[list[ReportRow], GudmundsonFit | None]:
    """Attach model predictions to measured rows.

    The proposed column is ratio * rho_X; the baseline is fitted to the
    measured common-node rows (of ``baseline_rows`` when given, which lets a
    short report borrow a larger fitting set) and reported as None elsewhere.
    """
    seps = [catalog[r.geometry_id].endpoint_separation for r in rows]
    pool = rows if baseline_rows is None else baseline_rows
    fit_pts = [(r.measured, catalog[r.geometry_id].endpoint_separation) for r in pool]
    fit_pts = [(m, s) for m, s in fit_pts if s is not None]
    fit = None
    if fit_pts:
        try:
            fit = fit_gudmundson([m for m, _ in fit_pts], [s for _, s in fit_pts], d_ref)
        except (DataError, ArgumentError) as exc:
            log.warning("baseline fit skipped: %s", exc)
    out = []
    for r, sep in zip(rows, seps):
        rho_x = geometry_corr(sp, catalog[r.geometry_id].geometry, q)
        prop = total_fading_corr(sp, rho_x)
        gud = float(fit.predict(sep)) if (fit is not None and sep is not None) else None
        out.append(ReportRow(r.geometry_id, r.n_pairs, r.measured, r.p_value, prop, gud))
    return out, fit


def write_report_csv(path, rows: list[ReportRow], header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([
                r.geometry_id, r.n_pairs, f"{r.measured:.6f}", r.stars, f"{r.p_value:.6g}", f"{r.proposed:.6f}",
                "n/a" if r.gudmundson is None else f"{r.gudmundson:.6f}",
            ])


def read_report_csv(path) -> list[ReportRow]:
    rows = []
    header = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            rec = next(csv.reader([line]))
            if header is None:
                header = rec
                if list(header) != list(COLUMNS):
                    raise ParseError(f"unexpected report columns {header}", line=lineno)
                continue
            try:
                d = dict(zip(header, rec))
                gud = None if d["gudmundson"] == "n/a" else float(d["gudmundson"])
                rows.append(ReportRow(d["geometry_id"], int(d["L"]), float(d["measured"]), float(d["p_value"]),
                                      float(d["proposed"]), gud))
            except (KeyError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if not rows:
        raise ParseError("report has no rows", line=None)
    return rows
