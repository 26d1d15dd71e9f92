"""Recompute best-vs-worst test statistics from published group summaries."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import ValidationError
from .stats import GroupSummary, cohens_d, welch_t_left
from .trials import AFFORDANCES, Affordance

DEFAULT_TOLERANCE = {"t": 1e-3, "d": 1e-3, "p_rel": 0.02}


def bundled_summaries() -> dict[str, Any]:
    """The four published best/worst summary rows shipped with the package."""
    return json.loads(resources.files("affordview").joinpath("data/table6.json").read_text())


def load_summaries(source: str | Path | Mapping[str, Any] | None = None) -> dict[str, Any]:
    if source is None:
        return bundled_summaries()
    if isinstance(source, Mapping):
        return dict(source)
    try:
        return json.loads(Path(source).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read summaries: {exc}") from exc


def _summary(doc: Any, where: str) -> GroupSummary:
    try:
        return GroupSummary(int(doc["n"]), float(doc["mean"]), float(doc["std"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: malformed summary ({exc})") from None


def check_table6(doc: Mapping[str, Any]) -> dict[str, Any]:
    """Recompute t, p and d per affordance and compare with the expected values.

    Every modeled affordance must have exactly one row. The result carries an
    overall ``ok`` flag and per-row deltas.
    """
    tol = {**DEFAULT_TOLERANCE, **doc.get("tolerance", {})}
    rows = doc.get("rows")
    if not isinstance(rows, list):
        raise ValidationError("summaries document needs a 'rows' list")
    by_aff: dict[Affordance, Mapping[str, Any]] = {}
    for row in rows:
        try:
            aff = Affordance.parse(row["affordance"])
        except (KeyError, TypeError):
            raise ValidationError("summary row without affordance") from None
        if aff in by_aff:
            raise ValidationError(f"duplicate summary row for {aff.title}")
        by_aff[aff] = row
    missing = [a.title for a in AFFORDANCES if a not in by_aff]
    if missing:
        raise ValidationError(f"missing summary rows for {', '.join(missing)}")

    results = []
    for aff in AFFORDANCES:
        row = by_aff[aff]
        best = _summary(row.get("best"), f"{aff.title} best")
        worst = _summary(row.get("worst"), f"{aff.title} worst")
        test = welch_t_left(best, worst)
        d = cohens_d(best, worst)
        entry: dict[str, Any] = {
            "affordance": aff.value,
            "t_statistic": test.statistic,
            "df": test.df,
            "p_value": test.p_value,
            "cohens_d": d,
        }
        expected = row.get("expected")
        if expected:
            try:
                dt = abs(test.statistic - float(expected["t"]))
                dd = abs(d - float(expected["d"]))
                dp = abs(test.p_value - float(expected["p"])) / abs(float(expected["p"]))
            except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
                raise ValidationError(f"{aff.title}: malformed expected values ({exc})") from None
            entry.update(
                expected=dict(expected),
                delta_t=dt,
                delta_d=dd,
                rel_delta_p=dp,
                ok=dt <= tol["t"] and dd <= tol["d"] and dp <= tol["p_rel"],
            )
        results.append(entry)
    return {"tolerance": tol, "rows": results, "ok": all(r.get("ok", True) for r in results)}
