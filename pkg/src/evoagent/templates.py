"""Persistent library of distilled reasoning-pathway templates.

Successful sessions are distilled into pathway skeletons with entity
tokens abstracted away, so later goals about different subjects can reuse
the same strategy. Storage is one template per line, UTF-8, stable field
order; identifiers are content hashes over title + skeleton.
"""
from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import LoadError, ValidationError
from .events import canonical_json, content_hash, strip_volatile
from .retrieval import rank, tokenize

SUBJECT_PLACEHOLDER = "⟨SUBJECT⟩"

# A goal word is treated as a named entity when it carries a digit or an
# uppercase letter past its first character (gene symbols, tool names);
# plain sentence-initial capitalization does not qualify.
_ENTITY_RE = re.compile(r"\d|(?<=.)[A-Z]")


def template_id(title: str, skeleton: list[str]) -> str:
    return content_hash({"title": title, "skeleton": list(skeleton)})[:16]


@dataclass
class Template:
    id: str
    title: str
    tags: frozenset[str]
    pathway_skeleton: tuple[str, ...]
    provenance_session: str
    success_metric: float
    usage_count: int = 0
    created_at: float = 0.0

    def validate(self) -> None:
        if not self.tags:
            raise ValidationError("template tags must be non-empty")
        if not self.pathway_skeleton:
            raise ValidationError("template skeleton must be non-empty")
        if self.id != template_id(self.title, list(self.pathway_skeleton)):
            raise ValidationError(f"template id does not match content: {self.id}")
        if not 0.0 <= self.success_metric <= 1.0:
            raise ValidationError("success_metric must be in [0, 1]")

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "tags": sorted(self.tags),
            "pathway_skeleton": list(self.pathway_skeleton),
            "provenance_session": self.provenance_session,
            "success_metric": self.success_metric,
            "usage_count": self.usage_count,
            "created_at": self.created_at,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "Template":
        return cls(
            id=record["id"],
            title=record["title"],
            tags=frozenset(record["tags"]),
            pathway_skeleton=tuple(record["pathway_skeleton"]),
            provenance_session=record["provenance_session"],
            success_metric=record["success_metric"],
            usage_count=record["usage_count"],
            created_at=record["created_at"],
        )


def entity_tokens(goal: str) -> list[str]:
    """Goal words that look like named entities, longest first."""
    words = [w.strip(".,;:!?()[]\"'") for w in goal.split()]
    ents = [w for w in words if len(w) > 1 and _ENTITY_RE.search(w)]
    return sorted(set(ents), key=lambda w: (-len(w), w))


def abstract_text(text: str, entities: list[str]) -> str:
    for ent in entities:
        text = re.sub(rf"(?<!\w){re.escape(ent)}(?!\w)", SUBJECT_PLACEHOLDER, text)
    return text


class TemplateLibrary:
    """Reasoning-template store with deterministic retrieval.

    Concurrent reads are safe; writes are serialized through a single lock.
    Growth is monotone: there is no eviction, and inserting an existing
    content hash is a no-op.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._templates: dict[str, Template] = {}
        self._lock = threading.RLock()
        if self._path and self._path.exists():
            self._load(self._path)

    def __len__(self) -> int:
        return len(self._templates)

    def get(self, tid: str) -> Template | None:
        return self._templates.get(tid)

    def all(self) -> list[Template]:
        with self._lock:
            return list(self._templates.values())

    def add(self, template: Template) -> Template:
        """Insert a template; duplicate content hashes are no-ops."""
        template.validate()
        with self._lock:
            existing = self._templates.get(template.id)
            if existing is not None:
                return existing
            self._templates[template.id] = template
            self._persist()
            return template

    def record_usage(self, tid: str) -> None:
        with self._lock:
            template = self._templates[tid]
            self._templates[tid] = replace(template, usage_count=template.usage_count + 1)
            self._persist()

    def retrieve(self, goal: str, k: int) -> list[tuple[Template, float]]:
        """Top-k templates by TF-IDF cosine of goal vs title+tags.

        Ties break by newest created_at, then id lexicographic.
        """
        if k < 1:
            raise ValidationError("k must be >= 1")
        with self._lock:
            templates = list(self._templates.values())
        docs = [(t.id, tokenize(t.title) + sorted(t.tags)) for t in templates]
        scored = rank(goal, docs)
        by_id = {t.id: t for t in templates}
        ordered = sorted(
            scored,
            key=lambda pair: (-pair[1], -by_id[pair[0]].created_at, pair[0]),
        )
        return [(by_id[tid], score) for tid, score in ordered[:k]]

    def distill(self, session, success_metric: float = 1.0) -> Template | None:
        """Turn a succeeded session's pathway into a reusable template.

        Named entities from the goal are replaced by a subject placeholder
        in the title and every skeleton step. Returns None for sessions
        that did not succeed; re-distilling the same content is a no-op.
        """
        if getattr(session, "status", None) != "succeeded":
            return None
        pathway = getattr(session, "pathway", None)
        if pathway is None or not pathway.steps:
            return None
        entities = entity_tokens(session.goal)
        title = abstract_text(session.goal, entities)
        skeleton = [abstract_text(step.description, entities) for step in pathway.steps]
        tags = frozenset(tokenize(abstract_text(session.goal, entities))) - {""}
        if not tags:
            tags = frozenset(tokenize(session.goal))
        template = Template(
            id=template_id(title, skeleton),
            title=title,
            tags=tags,
            pathway_skeleton=tuple(skeleton),
            provenance_session=session.id,
            success_metric=success_metric,
            created_at=time.time(),
        )
        return self.add(template)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path else self._path
        if target is None:
            raise ValidationError("no store path configured")
        with self._lock:
            lines = [canonical_json(t.to_record()) for t in self._templates.values()]
        target.write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")

    def _persist(self) -> None:
        if self._path is not None:
            self.save(self._path)

    def _load(self, path: Path) -> None:
        for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                template = Template.from_record(json.loads(line))
                template.validate()
            except (ValueError, KeyError, TypeError, ValidationError) as exc:
                raise LoadError(f"{path}:{lineno}: bad template record: {exc}") from exc
            self._templates[template.id] = template

    def store_hash(self) -> str:
        with self._lock:
            return content_hash([strip_volatile(t.to_record()) for t in self._templates.values()])


def load_library(path: str | Path) -> TemplateLibrary:
    """Load a library from disk; missing file is an error, empty file is empty."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"no such template store: {path}")
    return TemplateLibrary(path)
