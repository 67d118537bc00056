"""User annotations: free-text notes attached to time ranges.

Annotations target a set of series (or the whole home) plus a half-open
time range, never individual points. They survive author removal; the
author id is retained for attribution.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass

from .errors import MalformedRange, UnknownResource, ValidationError

MAX_TEXT_CHARS = 2048


@dataclass
class Annotation:
    id: str
    author: str
    selector: list[str] | None   # None = whole home
    t_from: int
    t_to: int
    text: str
    created_at: int

    def overlaps(self, t0: int, t1: int) -> bool:
        if self.t_from == self.t_to:  # instant marker
            return t0 <= self.t_from < t1
        return self.t_from < t1 and self.t_to > t0

    def targets(self, selector: list[str] | None) -> bool:
        if self.selector is None or selector is None:
            return True
        return any(s in self.selector for s in selector)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "author": self.author,
            "selector": self.selector,
            "t_from": self.t_from,
            "t_to": self.t_to,
            "text": self.text,
            "created_at": self.created_at,
        }


class AnnotationStore:
    DOC = "annotations"

    def __init__(self, docstore):
        self._docs = docstore
        self._lock = threading.RLock()
        self._annotations: dict[str, Annotation] = {
            a["id"]: Annotation(**a) for a in self._docs.load(self.DOC, [])
        }

    def add(
        self,
        author: str,
        selector: list[str] | None,
        t_from: int,
        t_to: int,
        text: str,
        created_at: int,
    ) -> Annotation:
        if t_from > t_to:
            raise MalformedRange("annotation range inverted")
        if not text or len(text) > MAX_TEXT_CHARS:
            raise ValidationError(f"annotation text must be 1..{MAX_TEXT_CHARS} chars")
        if selector is not None and not selector:
            raise ValidationError("annotation selector must name at least one series")
        note = Annotation(
            id=secrets.token_hex(8),
            author=author,
            selector=sorted(selector) if selector is not None else None,
            t_from=t_from,
            t_to=t_to,
            text=text,
            created_at=created_at,
        )
        with self._lock:
            self._annotations[note.id] = note
            self._persist()
        return note

    def get(self, annotation_id: str) -> Annotation:
        note = self._annotations.get(annotation_id)
        if note is None:
            raise UnknownResource(f"no annotation {annotation_id!r}")
        return note

    def remove(self, annotation_id: str) -> Annotation:
        with self._lock:
            note = self.get(annotation_id)
            del self._annotations[annotation_id]
            self._persist()
            return note

    def overlapping(
        self, selector: list[str] | None, t0: int, t1: int
    ) -> list[Annotation]:
        with self._lock:
            notes = list(self._annotations.values())
        return sorted(
            (a for a in notes if a.overlaps(t0, t1) and a.targets(selector)),
            key=lambda a: (a.t_from, a.id),
        )

    def all(self) -> list[Annotation]:
        with self._lock:
            return sorted(self._annotations.values(), key=lambda a: (a.created_at, a.id))

    def restore(self, docs: list[dict], merge: bool = False) -> int:
        with self._lock:
            added = 0
            if not merge:
                self._annotations = {}
            for doc in docs:
                if doc["id"] not in self._annotations:  # existing wins on merge
                    self._annotations[doc["id"]] = Annotation(**doc)
                    added += 1
            self._persist()
            return added

    def wipe(self) -> None:
        with self._lock:
            self._annotations = {}
            self._persist()

    def _persist(self) -> None:
        self._docs.save(self.DOC, [a.to_doc() for a in self.all()])
