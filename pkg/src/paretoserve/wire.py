"""Client/server transport realizing the cross-hair interface.

The protocol is newline-delimited JSON over a stream socket: one object per
line, fixed field order, UTF-8 (see protocol.md for byte examples).  This is
the exact observable surface an attacker has.  Inference replies carry only
the label or the single "infeasible_set" error code; model identities, served
latency, and noise realizations never appear on the wire, and the defended
infeasible error is byte-identical to the plain one.

Registration is a distinct phase ended by a start_serving control message;
the frontier is immutable once serving begins.  Telemetry exists only in
experiment mode.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

from .errors import MalformedMessage, OutOfRange, RegistrationAfterStart, ZooFormatError
from .router import DefenseConfig, QuerySpec, Router, TelemetrySnapshot, compute_sensitivities
from .zoo import GranularityConfig, ModelProfile, build_frontier


@dataclass(frozen=True)
class RegisterModel:
    id: str
    name: str
    accuracy: float
    latency_ms: float
    num_classes: int


@dataclass(frozen=True)
class StartServing:
    pass


@dataclass(frozen=True)
class InferRequest:
    request_id: int
    lat_max_ms: float
    input_id: int
    acc_min: float | None = None


@dataclass(frozen=True)
class InferResponse:
    request_id: int
    label: int


@dataclass(frozen=True)
class InferError:
    request_id: int
    code: str = "infeasible_set"


@dataclass(frozen=True)
class TelemetryRequest:
    pass


@dataclass(frozen=True)
class TelemetryResponse:
    total: int
    served: int
    satisfied: int
    infeasible: int
    per_model: dict[str, int]


@dataclass(frozen=True)
class ControlOk:
    pass


@dataclass(frozen=True)
class ProtocolError:
    code: str
    request_id: int | None = None


WireMessage = (
    RegisterModel
    | StartServing
    | InferRequest
    | InferResponse
    | InferError
    | TelemetryRequest
    | TelemetryResponse
    | ControlOk
    | ProtocolError
)

_TYPE_TAGS = {
    RegisterModel: "register_model",
    StartServing: "start_serving",
    InferRequest: "infer_request",
    InferResponse: "infer_response",
    InferError: "infer_error",
    TelemetryRequest: "telemetry_request",
    TelemetryResponse: "telemetry_response",
    ControlOk: "control_ok",
    ProtocolError: "protocol_error",
}


def encode(msg: WireMessage, g: GranularityConfig | None = None) -> bytes:
    """One JSON object, fixed field order, newline-terminated.

    With a granularity provided, inference-request specs are snapped to the
    grid; other numbers pass through as-is.
    """
    fields: dict[str, object]
    if isinstance(msg, RegisterModel):
        fields = {
            "id": msg.id,
            "name": msg.name,
            "accuracy": msg.accuracy,
            "latency_ms": msg.latency_ms,
            "num_classes": msg.num_classes,
        }
    elif isinstance(msg, InferRequest):
        acc = msg.acc_min
        lat = msg.lat_max_ms
        if g is not None:
            acc = None if acc is None else g.snap_acc(acc)
            lat = g.snap_lat(lat)
        fields = {"request_id": msg.request_id}
        if acc is not None:
            fields["acc_min"] = acc
        fields["lat_max_ms"] = lat
        fields["input_id"] = msg.input_id
    elif isinstance(msg, InferResponse):
        fields = {"request_id": msg.request_id, "label": msg.label}
    elif isinstance(msg, InferError):
        fields = {"request_id": msg.request_id, "code": msg.code}
    elif isinstance(msg, TelemetryResponse):
        fields = {
            "total": msg.total,
            "served": msg.served,
            "satisfied": msg.satisfied,
            "infeasible": msg.infeasible,
            "per_model": msg.per_model,
        }
    elif isinstance(msg, ProtocolError):
        fields = {} if msg.request_id is None else {"request_id": msg.request_id}
        fields["code"] = msg.code
    elif isinstance(msg, (StartServing, TelemetryRequest, ControlOk)):
        fields = {}
    else:
        raise TypeError(f"not a wire message: {msg!r}")
    doc = {"type": _TYPE_TAGS[type(msg)], **fields}
    return json.dumps(doc, separators=(",", ":")).encode("utf-8") + b"\n"


def _require(doc: dict, allowed: set[str], required: set[str]) -> None:
    extra = doc.keys() - allowed - {"type"}
    if extra:
        raise MalformedMessage(f"unknown fields: {sorted(extra)}")
    missing = required - doc.keys()
    if missing:
        raise MalformedMessage(f"missing fields: {sorted(missing)}")


def decode(line: bytes, g: GranularityConfig | None = None) -> WireMessage:
    """Inverse of ``encode``; rejects unknown fields and out-of-range specs."""
    if not line.endswith(b"\n"):
        raise MalformedMessage("message line not newline-terminated")
    try:
        doc = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedMessage(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "type" not in doc:
        raise MalformedMessage("message must be an object with a 'type' field")
    tag = doc["type"]
    try:
        if tag == "register_model":
            _require(doc, {"id", "name", "accuracy", "latency_ms", "num_classes"},
                     {"id", "name", "accuracy", "latency_ms", "num_classes"})
            return RegisterModel(
                id=str(doc["id"]),
                name=str(doc["name"]),
                accuracy=float(doc["accuracy"]),
                latency_ms=float(doc["latency_ms"]),
                num_classes=int(doc["num_classes"]),
            )
        if tag == "start_serving":
            _require(doc, set(), set())
            return StartServing()
        if tag == "infer_request":
            _require(doc, {"request_id", "acc_min", "lat_max_ms", "input_id"},
                     {"request_id", "lat_max_ms", "input_id"})
            acc = doc.get("acc_min")
            if acc is not None:
                acc = float(acc)
                if not 0.0 <= acc <= 1.0:
                    raise OutOfRange(f"acc_min must be in [0, 1], got {acc}")
            lat = float(doc["lat_max_ms"])
            if not lat > 0.0:
                raise OutOfRange(f"lat_max_ms must be positive, got {lat}")
            if g is not None:
                acc = None if acc is None else g.snap_acc(acc)
                lat = g.snap_lat(lat)
            return InferRequest(
                request_id=int(doc["request_id"]), acc_min=acc, lat_max_ms=lat,
                input_id=int(doc["input_id"]),
            )
        if tag == "infer_response":
            _require(doc, {"request_id", "label"}, {"request_id", "label"})
            return InferResponse(request_id=int(doc["request_id"]), label=int(doc["label"]))
        if tag == "infer_error":
            _require(doc, {"request_id", "code"}, {"request_id", "code"})
            return InferError(request_id=int(doc["request_id"]), code=str(doc["code"]))
        if tag == "telemetry_request":
            _require(doc, set(), set())
            return TelemetryRequest()
        if tag == "telemetry_response":
            _require(doc, {"total", "served", "satisfied", "infeasible", "per_model"},
                     {"total", "served", "satisfied", "infeasible", "per_model"})
            return TelemetryResponse(
                total=int(doc["total"]), served=int(doc["served"]),
                satisfied=int(doc["satisfied"]), infeasible=int(doc["infeasible"]),
                per_model={str(k): int(v) for k, v in doc["per_model"].items()},
            )
        if tag == "control_ok":
            _require(doc, set(), set())
            return ControlOk()
        if tag == "protocol_error":
            _require(doc, {"code", "request_id"}, {"code"})
            rid = doc.get("request_id")
            return ProtocolError(code=str(doc["code"]), request_id=None if rid is None else int(rid))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (MalformedMessage, OutOfRange)):
            raise
        raise MalformedMessage(f"bad field value: {exc}") from exc
    raise MalformedMessage(f"unknown message type {tag!r}")


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: WireServer = self.server  # type: ignore[assignment]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            if not line.endswith(b"\n"):
                self._send(ProtocolError(code="malformed_message"))
                return
            try:
                msg = decode(line, server.granularity)
            except OutOfRange:
                self._send(ProtocolError(code="out_of_range"))
                continue
            except MalformedMessage:
                self._send(ProtocolError(code="malformed_message"))
                return
            try:
                reply = server.dispatch(msg)
            except RegistrationAfterStart:
                self._send(ProtocolError(code="registration_after_start"))
                continue
            if reply is not None:
                self._send(reply)

    def _send(self, msg: WireMessage) -> None:
        self.wfile.write(encode(msg, None))
        self.wfile.flush()


class WireServer(socketserver.ThreadingTCPServer):
    """The shim server: registration phase, then inference (and telemetry).

    In service mode each reply is delayed by the served model's profiled
    latency; experiment mode runs on virtual time and answers telemetry.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        granularity: GranularityConfig,
        *,
        router: Router | None = None,
        mode: str = "experiment",
        seed: int = 0,
        defense_epsilon: float | None = None,
    ) -> None:
        if mode not in ("service", "experiment"):
            raise ValueError(f"mode must be 'service' or 'experiment', got {mode!r}")
        super().__init__(address, _Handler)
        self.granularity = granularity
        self.mode = mode
        self.seed = seed
        self.defense_epsilon = defense_epsilon
        self.router = router
        self._pending: list[ModelProfile] = []
        self._state_lock = threading.Lock()

    @property
    def port(self) -> int:
        return self.server_address[1]

    def dispatch(self, msg: WireMessage) -> WireMessage | None:
        if isinstance(msg, RegisterModel):
            with self._state_lock:
                if self.router is not None:
                    raise RegistrationAfterStart("model registration after serving started")
                self._pending.append(
                    ModelProfile(
                        id=msg.id, name=msg.name, accuracy=msg.accuracy,
                        latency=msg.latency_ms, num_classes=msg.num_classes,
                    )
                )
            return ControlOk()
        if isinstance(msg, StartServing):
            with self._state_lock:
                if self.router is not None:
                    raise RegistrationAfterStart("serving already started")
                frontier = build_frontier(self._pending, self.granularity)
                defense = None
                if self.defense_epsilon is not None:
                    delta_acc, delta_lat = compute_sensitivities(frontier)
                    defense = DefenseConfig(
                        enabled=True, epsilon=self.defense_epsilon,
                        delta_acc=delta_acc, delta_lat=delta_lat,
                    )
                self.router = Router(frontier, seed=self.seed, defense=defense,
                                     dataset_seed=self.seed)
            return ControlOk()
        if isinstance(msg, InferRequest):
            if self.router is None:
                return ProtocolError(code="not_serving", request_id=msg.request_id)
            spec = QuerySpec(lat_req=msg.lat_max_ms, acc_req=msg.acc_min, input_id=msg.input_id)
            outcome = self.router.serve(spec)
            if not outcome.served:
                return InferError(request_id=msg.request_id)
            if self.mode == "service":
                served = self.router.frontier.model(outcome.served_model_id)
                time.sleep(served.latency / 1000.0)
            return InferResponse(request_id=msg.request_id, label=outcome.label)
        if isinstance(msg, TelemetryRequest):
            if self.mode != "experiment":
                return ProtocolError(code="telemetry_unavailable")
            if self.router is None:
                return ProtocolError(code="not_serving")
            snap = self.router.telemetry()
            return TelemetryResponse(
                total=snap.total, served=snap.served, satisfied=snap.satisfied,
                infeasible=snap.infeasible, per_model=snap.per_model,
            )
        return ProtocolError(code="unexpected_message")

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve_loop(server: WireServer) -> None:
    """Run the server until interrupted."""
    try:
        server.serve_forever()
    finally:
        server.server_close()


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


class WireClient:
    """Line-oriented client; the attack's remote transport."""

    def __init__(self, host: str, port: int, g: GranularityConfig | None = None, timeout: float = 30.0):
        self.g = g
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._next_request_id = 0
        self.captured: list[bytes] | None = None

    def capture(self) -> None:
        """Record all received bytes (for leakage inspection in tests)."""
        self.captured = []

    def close(self) -> None:
        self._rfile.close()
        self._sock.close()

    def __enter__(self) -> "WireClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def roundtrip(self, msg: WireMessage) -> WireMessage:
        self._sock.sendall(encode(msg, self.g))
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        if self.captured is not None:
            self.captured.append(line)
        return decode(line, None)

    def register(self, model: ModelProfile) -> None:
        reply = self.roundtrip(
            RegisterModel(id=model.id, name=model.name, accuracy=model.accuracy,
                          latency_ms=model.latency, num_classes=model.num_classes)
        )
        if not isinstance(reply, ControlOk):
            raise ConnectionError(f"registration rejected: {reply}")

    def start_serving(self) -> None:
        reply = self.roundtrip(StartServing())
        if not isinstance(reply, ControlOk):
            raise ConnectionError(f"start_serving rejected: {reply}")

    def infer(self, acc_req: float | None, lat_req: float, input_id: int) -> tuple[bool, int | None]:
        request_id = self._next_request_id
        self._next_request_id += 1
        reply = self.roundtrip(
            InferRequest(request_id=request_id, acc_min=acc_req, lat_max_ms=lat_req, input_id=input_id)
        )
        if isinstance(reply, InferResponse):
            if reply.request_id != request_id:
                raise ConnectionError(f"response for {reply.request_id}, expected {request_id}")
            return True, reply.label
        if isinstance(reply, InferError):
            if reply.request_id != request_id:
                raise ConnectionError(f"error for {reply.request_id}, expected {request_id}")
            return False, None
        raise ConnectionError(f"unexpected reply: {reply}")

    def telemetry(self) -> TelemetrySnapshot:
        reply = self.roundtrip(TelemetryRequest())
        if not isinstance(reply, TelemetryResponse):
            raise ConnectionError(f"telemetry unavailable: {reply}")
        return TelemetrySnapshot(
            total=reply.total, served=reply.served, satisfied=reply.satisfied,
            infeasible=reply.infeasible, per_model=reply.per_model,
        )


def make_server(
    models: list[ModelProfile],
    g: GranularityConfig,
    *,
    host: str = "127.0.0.1",
    port: int = 0,
    mode: str = "experiment",
    seed: int = 0,
    epsilon: float | None = None,
) -> WireServer:
    """Build a ready-to-serve server from an in-memory zoo."""
    frontier = build_frontier(models, g)
    defense = None
    if epsilon is not None:
        delta_acc, delta_lat = compute_sensitivities(frontier)
        defense = DefenseConfig(enabled=True, epsilon=epsilon, delta_acc=delta_acc, delta_lat=delta_lat)
    router = Router(frontier, seed=seed, defense=defense, dataset_seed=seed)
    return WireServer((host, port), g, router=router, mode=mode, seed=seed,
                      defense_epsilon=epsilon)
