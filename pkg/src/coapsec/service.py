"""HTTP service wrapping the demo harness.

Exposes the handshake matrix, the protected message roundtrip, the
combined run and the crypto vector files behind a small JSON API, so
several clients can drive scenarios against one long-running process.
The CLI is a thin client of this app (in process by default).
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from . import __version__, vectorio
from .edhoc import EdhocError
from .harness import demo


class EdhocRunRequest(BaseModel):
    mode: str = "all"
    seed: int = Field(default=1, ge=0, lt=2**64)
    transport: str = Field(default="mem", pattern="^(mem|udp)$")
    tamper: str | None = None
    timeout_ms: int = Field(default=2000, gt=0, le=600_000)


class SizeRow(BaseModel):
    """Measured handshake message sizes next to the reference constants."""

    mode: str
    complete: bool
    msg1_len: int | None
    msg2_len: int | None
    msg3_len: int | None
    reference_msg1: int | None = None
    reference_msg2: int | None = None
    reference_msg3: int | None = None
    deviation_pct: list[float] | None = None
    exporter_match: bool
    th_hex: str | None
    transcript_sha256: str | None = None
    error: str | None
    elapsed_ms: float

    @classmethod
    def from_result(cls, r: demo.EdhocDemoResult) -> "SizeRow":
        ref = r.reference or (None, None, None)
        return cls(
            mode=r.mode,
            complete=r.complete,
            msg1_len=r.msg1_len,
            msg2_len=r.msg2_len,
            msg3_len=r.msg3_len,
            reference_msg1=ref[0],
            reference_msg2=ref[1],
            reference_msg3=ref[2],
            deviation_pct=list(r.deviation_pct) if r.deviation_pct else None,
            exporter_match=r.exporter_match,
            th_hex=r.th_hex,
            transcript_sha256=r.transcript_sha256,
            error=r.error,
            elapsed_ms=round(r.elapsed_ms, 3),
        )


class EdhocRunResponse(BaseModel):
    rows: list[SizeRow]
    all_complete: bool


class EdhocEndpointRequest(BaseModel):
    role: str = Field(pattern="^(initiator|responder)$")
    mode: str = "static-dh-rpk"
    seed: int = Field(default=1, ge=0, lt=2**64)
    listen: str | None = None
    connect: str | None = None
    timeout_ms: int = Field(default=10_000, gt=0, le=600_000)


class OscoreRunRequest(BaseModel):
    transport: str = Field(default="mem", pattern="^(mem|udp)$")
    tamper: str | None = None
    replay: bool = False


class OscoreReport(BaseModel):
    request_coap_len: int
    request_oscore_len: int
    response_coap_len: int
    response_oscore_len: int
    padded_request_coap_len: int
    padded_request_oscore_len: int
    roundtrip: str
    replay_result: str | None
    headline: str
    elapsed_ms: float

    @classmethod
    def from_result(cls, r: demo.OscoreDemoResult) -> "OscoreReport":
        return cls(
            request_coap_len=r.request_coap_len,
            request_oscore_len=r.request_oscore_len,
            response_coap_len=r.response_coap_len,
            response_oscore_len=r.response_oscore_len,
            padded_request_coap_len=r.padded_request_coap_len,
            padded_request_oscore_len=r.padded_request_oscore_len,
            roundtrip=r.roundtrip,
            replay_result=r.replay_result,
            headline=r.headline(),
            elapsed_ms=round(r.elapsed_ms, 3),
        )


class CombinedRunRequest(BaseModel):
    mode: str = "static-dh-rpk"
    seed: int = Field(default=1, ge=0, lt=2**64)
    transport: str = Field(default="mem", pattern="^(mem|udp)$")


class CombinedReport(BaseModel):
    edhoc: SizeRow
    master_secret_len: int
    request_oscore_len: int
    response_oscore_len: int
    roundtrip: str
    ok: bool
    elapsed_ms: float


class VectorFileReport(BaseModel):
    name: str
    vectors: int
    ok: bool
    failures: list[int]


class VectorVerifyResponse(BaseModel):
    files: list[VectorFileReport]
    all_ok: bool


def _parse_hostport(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise HTTPException(status_code=422, detail=f"bad host:port value {value!r}")
    return host, int(port)


def create_app() -> FastAPI:
    app = FastAPI(
        title="coapsec",
        version=__version__,
        description="OSCORE/EDHOC demo service: handshakes, protected "
        "roundtrips and crypto vector checks.",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/edhoc/run", response_model=EdhocRunResponse)
    def edhoc_run(req: EdhocRunRequest) -> EdhocRunResponse:
        try:
            if req.mode == "all":
                results = demo.run_edhoc_matrix(req.transport, req.seed, req.timeout_ms)
            else:
                results = [
                    demo.run_edhoc_demo(
                        req.mode, req.transport, req.seed, req.tamper, req.timeout_ms
                    )
                ]
        except (EdhocError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        rows = [SizeRow.from_result(r) for r in results]
        return EdhocRunResponse(rows=rows, all_complete=all(r.complete for r in rows))

    @app.post("/edhoc/endpoint", response_model=SizeRow)
    def edhoc_endpoint(req: EdhocEndpointRequest) -> SizeRow:
        listen = _parse_hostport(req.listen) if req.listen else None
        connect = _parse_hostport(req.connect) if req.connect else None
        try:
            result = demo.run_edhoc_endpoint(
                req.role, req.mode, req.seed, listen, connect, req.timeout_ms
            )
        except (EdhocError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return SizeRow.from_result(result)

    @app.post("/oscore/run", response_model=OscoreReport)
    def oscore_run(req: OscoreRunRequest) -> OscoreReport:
        return OscoreReport.from_result(
            demo.run_oscore_demo(req.transport, req.tamper, req.replay)
        )

    @app.post("/combined/run", response_model=CombinedReport)
    def combined_run(req: CombinedRunRequest) -> CombinedReport:
        try:
            result = demo.run_combined_demo(req.mode, req.transport, req.seed)
        except (EdhocError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return CombinedReport(
            edhoc=SizeRow.from_result(result.edhoc),
            master_secret_len=result.master_secret_len,
            request_oscore_len=result.request_oscore_len,
            response_oscore_len=result.response_oscore_len,
            roundtrip=result.roundtrip,
            ok=result.ok,
            elapsed_ms=round(result.elapsed_ms, 3),
        )

    @app.get("/vectors")
    def vectors_list() -> dict:
        return {"files": list(vectorio.VECTOR_FILES)}

    @app.get("/vectors/{name}", response_class=PlainTextResponse)
    def vectors_file(name: str) -> str:
        if name not in vectorio.VECTOR_FILES:
            raise HTTPException(status_code=404, detail=f"no vector file {name!r}")
        return vectorio.packaged_vector_text(name)

    @app.post("/vectors/verify", response_model=VectorVerifyResponse)
    def vectors_verify() -> VectorVerifyResponse:
        results = vectorio.verify_all()
        files = [
            VectorFileReport(
                name=r.name, vectors=r.vectors, ok=r.ok, failures=r.failures
            )
            for r in results
        ]
        return VectorVerifyResponse(files=files, all_ok=all(r.ok for r in results))

    return app


app = create_app()
