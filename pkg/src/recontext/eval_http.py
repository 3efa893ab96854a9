"""HTTP layer over the eval service and prompt-bank curation.

Stdlib threading server; JSON in/out with permissive CORS so the rater UI
can run from a dev server on another origin. All verdict logic stays
server-side: the UI only ever posts raw answers.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .errors import (
    ConflictError,
    EmptyBankError,
    IncompletePanelError,
    NotFoundError,
    RecontextError,
    ValidationError,
)
from .eval_service import EvalService, protocol_document
from .prompt_bank import PromptBank
from .store import AssetStore

_ROUTES = (
    ("GET", re.compile(r"^/protocol$"), "protocol"),
    ("GET", re.compile(r"^/tasks/next$"), "next_task"),
    ("POST", re.compile(r"^/tasks/(?P<task_id>[^/]+)/rating$"), "submit_rating"),
    ("GET", re.compile(r"^/assets/(?P<asset_id>[^/]+)/image$"), "asset_image"),
    ("GET", re.compile(r"^/verdicts/(?P<asset_id>[^/]+)$"), "verdict"),
    ("GET", re.compile(r"^/report$"), "report"),
    ("GET", re.compile(r"^/bank/(?P<category>[^/]+)/pending$"), "bank_pending"),
    ("POST", re.compile(r"^/bank/entries/(?P<entry_id>[^/]+)/decision$"), "bank_decision"),
)


class EvalApp:
    """Route handlers, kept separate from the socket plumbing for testability."""

    def __init__(self, service: EvalService, bank: Optional[PromptBank] = None,
                 store: Optional[AssetStore] = None):
        self.service = service
        self.bank = bank
        self.store = store

    def handle(self, method: str, path: str, query: dict, body: dict) -> tuple[int, object]:
        for route_method, pattern, name in _ROUTES:
            match = pattern.match(path)
            if match and route_method == method:
                handler = getattr(self, f"_{name}")
                try:
                    return handler(query=query, body=body, **match.groupdict())
                except NotFoundError as exc:
                    return 404, {"error": str(exc)}
                except ConflictError as exc:
                    return 409, {"error": str(exc)}
                except IncompletePanelError as exc:
                    return 409, {"error": str(exc)}
                except (ValidationError, EmptyBankError) as exc:
                    return 400, {"error": str(exc)}
                except RecontextError as exc:
                    return 500, {"error": str(exc)}
        return 404, {"error": f"no route for {method} {path}"}

    # -- rating flow ---------------------------------------------------------

    def _protocol(self, **_):
        return 200, protocol_document()

    def _next_task(self, query, **_):
        rater = (query.get("rater") or [""])[0]
        task = self.service.fetch_next_task(rater)
        if task is None:
            return 200, {"task": None}
        return 200, {
            "task": {
                "task_id": task.task_id,
                "asset_id": task.asset_id,
                "source_asset_ids": list(task.source_asset_ids),
                "status": task.status.value,
            }
        }

    def _submit_rating(self, task_id, body, **_):
        record = self.service.submit_rating(
            task_id, body.get("rater", ""), body.get("answers", [])
        )
        return 200, {
            "rating_id": record.rating_id,
            "asset_id": record.asset_id,
            "answers": [a.value for a in record.answers],
        }

    def _asset_image(self, asset_id, **_):
        if self.store is None:
            return 404, {"error": "no asset store attached"}
        asset = self.store.get_asset(asset_id)
        return 200, ("image/png", (self.store.root / asset.image_ref).read_bytes())

    def _verdict(self, asset_id, **_):
        ratings = self.service.ratings_for(asset_id)
        if len(ratings) != self.service.raters_needed:
            return 200, {"asset_id": asset_id, "verdict": None, "ratings_submitted": len(ratings)}
        return 200, {
            "asset_id": asset_id,
            "verdict": self.service.verdict_for(asset_id),
            "ratings_submitted": len(ratings),
        }

    def _report(self, **_):
        return 200, self.service.report()

    # -- prompt-bank curation --------------------------------------------------

    def _bank_pending(self, category, **_):
        if self.bank is None:
            return 404, {"error": "no prompt bank attached"}
        entries = self.bank.pending(category)
        return 200, {
            "category": category,
            "entries": [
                {"entry_id": e.entry_id, "prompt_text": e.prompt_text, "status": e.status.value}
                for e in entries
            ],
        }

    def _bank_decision(self, entry_id, body, **_):
        if self.bank is None:
            return 404, {"error": "no prompt bank attached"}
        category, _ = self.bank.find_entry(entry_id)
        entry = self.bank.curate(
            category, entry_id, body.get("decision", ""), body.get("reviewer", "ui")
        )
        return 200, {
            "entry_id": entry.entry_id,
            "category": entry.category,
            "status": entry.status.value,
        }


def make_server(app: EvalApp, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # quiet by default
            pass

        def _send(self, status: int, payload: object) -> None:
            if isinstance(payload, tuple):
                content_type, data = payload
            else:
                content_type = "application/json"
                data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(data)

        def _dispatch(self, method: str) -> None:
            from urllib.parse import parse_qs, urlparse

            parsed = urlparse(self.path)
            body = {}
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length).decode("utf-8"))
                except json.JSONDecodeError:
                    self._send(400, {"error": "request body is not valid JSON"})
                    return
            status, payload = app.handle(method, parsed.path, parse_qs(parsed.query), body)
            self._send(status, payload)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            self._send(204, {})

    return ThreadingHTTPServer((host, port), Handler)


def serve_forever_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
