"""In-process reference server for the backend wire protocol (test-only)."""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from recontext.backends import wire
from recontext.backends.mock import MockBackend
from recontext.errors import TrainerError, ValidationError
from recontext.models import JobStatus


class BackendServer:
    """Serves a MockBackend over HTTP; can inject failures for retry tests."""

    def __init__(self, backend: MockBackend | None = None):
        self.backend = backend or MockBackend(out_size=(32, 32))
        self.fail_next = 0          # respond 500 this many times
        self.reject_next = 0        # respond non-retryable error this many times
        self.requests_seen = 0
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler_class())

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def start(self):
        import threading

        thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    def _dispatch(self, operation: str, payload: dict, seed) -> dict:
        b = self.backend
        if operation == "generate_image":
            return {"image": wire.encode_raster(b.generate_image(payload["prompt"], seed))}
        if operation == "outpaint":
            out = b.outpaint(
                wire.decode_raster(payload["image"]), wire.decode_mask(payload["mask"]),
                payload["prompt"], seed,
            )
            return {"image": wire.encode_raster(out)}
        if operation == "inpaint":
            out = b.inpaint(
                wire.decode_raster(payload["image"]), wire.decode_mask(payload["mask"]),
                payload["prompt"], seed,
            )
            return {"image": wire.encode_raster(out)}
        if operation == "generate_novel_views":
            frames = b.generate_novel_views(
                wire.decode_raster(payload["image"]), seed, payload["n_frames"]
            )
            return {"frames": [wire.encode_raster(f) for f in frames]}
        if operation == "segment":
            mask = b.segment(wire.decode_raster(payload["image"]), payload.get("subject_hint", ""))
            return {"mask": wire.encode_mask(mask)}
        if operation == "caption":
            record = b.caption(wire.decode_raster(payload["image"]), payload["instruction"])
            return {"caption_id": record.caption_id, "text": record.text,
                    "attributes": dict(record.attributes)}
        if operation == "embed_image":
            return {"values": b.embed_image(wire.decode_raster(payload["image"]), payload["model"]).values.tolist()}
        if operation == "embed_text":
            return {"values": b.embed_text(payload["text"], payload["model"]).values.tolist()}
        if operation == "generate_text":
            return {"texts": b.generate_text(payload["prompt"], payload["n"], seed)}
        if operation == "submit_training_job":
            job_ref = b.submit_training_job(wire.decode_spec(payload["spec"]),
                                            [tuple(c) for c in payload["captions"]])
            return {"job_ref": job_ref}
        if operation == "poll_job":
            try:
                status, model_ref = b.poll_job(payload["job_ref"])
            except TrainerError as exc:
                return {"status": JobStatus.FAILED.value, "message": str(exc)}
            return {"status": status.value, "model_ref": model_ref}
        if operation == "sample_from_model":
            samples = b.sample_from_model(payload["model_ref"], payload["prompt"], seed, payload["n"])
            return {"images": [wire.encode_raster(s) for s in samples]}
        raise ValidationError(f"unknown operation {operation!r}")

    def _handler_class(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                outer.requests_seen += 1
                length = int(self.headers.get("Content-Length") or 0)
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                if outer.fail_next > 0:
                    outer.fail_next -= 1
                    self.send_response(500)
                    self.end_headers()
                    return
                if outer.reject_next > 0:
                    outer.reject_next -= 1
                    data = json.dumps(
                        wire.error_response("generation", "content rejected", retryable=False)
                    ).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                    return
                operation = self.path.rsplit("/", 1)[-1]
                try:
                    payload = outer._dispatch(operation, body["payload"], body.get("seed"))
                    response = wire.ok_response(payload)
                except ValidationError as exc:
                    response = wire.error_response("validation", str(exc), retryable=False)
                data = json.dumps(response).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler
