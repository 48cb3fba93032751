"""Model, experiment and sweep documents (JSON) and their schemas."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .mutation import SequentialModel
from .offspring import (InvalidLawError, MarkingRule, OffspringLaw, binary_law, geometric_law,
                        near_critical_law, poisson_law)


class DocumentError(ValueError):
    """A document does not match its schema or references bad values."""


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("bgw_skeleton").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: dict, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DocumentError(f"{name} document invalid at {where}: {exc.message}") from None


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DocumentError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: {exc}") from None


def law_from_dict(law_doc: dict) -> OffspringLaw:
    if "pmf" in law_doc:
        return OffspringLaw(law_doc["pmf"])
    fam = law_doc["family"]
    if fam == "binary":
        return binary_law(law_doc.get("epsilon", 0.0))
    if fam == "poisson":
        return poisson_law(law_doc.get("mean", 1.0))
    if fam == "geometric":
        return geometric_law(law_doc.get("mean", 1.0))
    if fam == "near_critical":
        return near_critical_law(law_doc.get("epsilon", 0.0), law_doc.get("sigma2", 1.0))
    raise DocumentError(f"unknown family {fam!r}")


def rule_from_dict(law: OffspringLaw, marking: dict | None) -> MarkingRule:
    if marking is None or marking["kind"] == "none":
        return MarkingRule.none(law)
    if marking["kind"] == "constant":
        return MarkingRule.constant(law, marking["mu"])
    return MarkingRule.for_law(law, marking["a"])


@dataclass
class SingleModel:
    law: OffspringLaw
    rule: MarkingRule
    sigma2: float

    def to_dict(self) -> dict:
        return {"law": self.law.to_dict(), "marking": self.rule.to_dict(), "sigma2": self.sigma2}


def model_from_dict(doc: dict):
    """A :class:`SingleModel` or a :class:`SequentialModel`."""
    validate(doc, "model")
    if "levels" in doc:
        return SequentialModel([(law_from_dict(lv["law"]), float(lv["pi"])) for lv in doc["levels"]])
    law = law_from_dict(doc["law"])
    rule = rule_from_dict(law, doc.get("marking"))
    return SingleModel(law, rule, float(doc.get("sigma2", law.factorial_moment2)))


def model_to_dict(model) -> dict:
    if isinstance(model, SequentialModel):
        return {"levels": [{"law": law.to_dict(), "pi": pi} for law, pi in model.levels]}
    return model.to_dict()


def load_model(path):
    doc = read_json(path)
    try:
        return model_from_dict(doc)
    except InvalidLawError:
        raise
    except DocumentError as exc:
        raise DocumentError(f"{path}: {exc}") from None
