"""A local HTTP server speaking the remote backend's JSON protocol.

Meta requests are answered from a canned list of directives (cycled).
Assistant requests are answered by following the directive quoted in the
prompt, so the server behaves like an obedient model. Failures can be
injected for the first ``fail_first`` requests or for every request.

    with MockLmServer(["Always divide everything equally between yourself and others."]) as srv:
        backend = RemoteBackend(srv.url, sleep=lambda s: None)
"""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence

from scai import grammar
from scai.actions import Offer
from scai.agents import policy_decision, policy_offer
from scai.inference import parse_directive

_PRINCIPLE = re.compile(r"Follow this principle: (?P<p>.*?)\n")
_PROPOSE = re.compile(r"You are the proposer\. Split (?P<total>\d+) (?P<currency>.+?) and answer")
_DECIDE = re.compile(r"The proposal is: (?P<proposal>.+?) Answer with exactly one word")


def obedient_reply(prompt: str) -> str:
    """Answer an assistant prompt by following its principle exactly."""
    m = _PRINCIPLE.search(prompt)
    policy = parse_directive(m.group("p")) if m else None
    if policy is None:
        return "I am not sure."
    if (m := _PROPOSE.search(prompt)) is not None:
        offer = policy_offer(policy, int(m.group("total")))
        return grammar.render_proposal(offer, m.group("currency"))
    if (m := _DECIDE.search(prompt)) is not None:
        p = grammar.parse_proposal(m.group("proposal"))
        offer = Offer(p.total, p.proposer_share, p.responder_share)
        return grammar.render_decision(policy_decision(policy, offer))
    return "I am not sure."


class MockLmServer:
    def __init__(
        self,
        meta_responses: Sequence[str] = (),
        fail_first: int = 0,
        fail_always: bool = False,
        fail_status: int = 500,
        api_key: Optional[str] = None,
        auth_header: str = "Authorization",
    ):
        self.meta_responses = list(meta_responses)
        self.fail_first = fail_first
        self.fail_always = fail_always
        self.fail_status = fail_status
        self.api_key = api_key
        self.auth_header = auth_header
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._meta_i = 0
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/complete"

    def _respond(self, body: dict, headers) -> tuple[int, dict]:
        with self._lock:
            self.requests.append(body)
            n = len(self.requests)
            if self.fail_always or n <= self.fail_first:
                return self.fail_status, {"error": "injected failure"}
            if self.api_key is not None and headers.get(self.auth_header) != self.api_key:
                return 401, {"error": "unauthorized"}
            if body.get("role") == "meta":
                if not self.meta_responses:
                    return 500, {"error": "no canned meta responses"}
                text = self.meta_responses[self._meta_i % len(self.meta_responses)]
                self._meta_i += 1
            elif body.get("role") == "assistant":
                text = obedient_reply(body.get("prompt", ""))
            else:
                return 400, {"error": "unknown role"}
        return 200, {"text": text, "prompt_tokens": len(body.get("prompt", "").split()),
                     "completion_tokens": len(text.split())}

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length))
                except ValueError:
                    status, payload = 400, {"error": "bad json"}
                else:
                    status, payload = server._respond(body, self.headers)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return Handler

    def start(self) -> "MockLmServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
