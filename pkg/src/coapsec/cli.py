"""Command line client for the demo service.

Talks to the HTTP API; without --server it mounts the app in process,
so no running server is needed. Exit status is nonzero whenever the
requested scenario did not fully succeed, which makes the commands
usable from scripts and the tamper/replay runs honest negative controls.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from .service import create_app


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=60.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient  # sync in-process ASGI client

    return TestClient(create_app())


def _post(server: str | None, path: str, payload: dict) -> dict:
    with _client(server) as client:
        response = client.post(path, json=payload)
        if response.status_code >= 400:
            raise click.ClickException(f"{path}: {response.status_code} {response.text}")
        return response.json()


def _print_size_row(row: dict) -> None:
    sizes = f"{row['msg1_len']}/{row['msg2_len']}/{row['msg3_len']}"
    line = f"{row['mode']:<42} msg1/2/3={sizes:<14}"
    if row.get("reference_msg1") is not None:
        ref = f"{row['reference_msg1']}/{row['reference_msg2']}/{row['reference_msg3']}"
        dev = ",".join(f"{d:+.1f}%" for d in row["deviation_pct"] or [])
        line += f" reference={ref:<12} deviation={dev}"
    status = "complete" if row["complete"] else f"FAILED ({row.get('error')})"
    line += f" exporter_match={row['exporter_match']} [{status}]"
    click.echo(line)


server_option = click.option(
    "--server", default=None, metavar="URL", help="Remote service URL (default: in-process)."
)
json_option = click.option("--json", "as_json", is_flag=True, help="Print raw JSON.")


@click.group()
def main() -> None:
    """Handshake and protected-messaging demos with byte-size reports."""


@main.command()
@click.option("--mode", default="all", show_default=True,
              help="Mode alias, 'all', or i:<auth>-<cred>/r:<auth>-<cred>.")
@click.option("--seed", default=1, show_default=True, type=int,
              help="Seed for the recorded rng; fixed seed gives identical bytes.")
@click.option("--transport", default="mem", show_default=True,
              type=click.Choice(["mem", "udp"]))
@click.option("--tamper", default=None, metavar="MSG[:OFFSET]",
              help="Flip one byte of msg1/msg2/msg3 in flight.")
@click.option("--role", default=None, type=click.Choice(["initiator", "responder"]),
              help="Run a single role over UDP (split-process mode).")
@click.option("--listen", default=None, metavar="HOST:PORT",
              help="Responder bind address (with --role responder).")
@click.option("--connect", default=None, metavar="HOST:PORT",
              help="Peer address (with --role initiator).")
@click.option("--timeout-ms", default=10000, show_default=True, type=int)
@server_option
@json_option
def edhoc(mode, seed, transport, tamper, role, listen, connect, timeout_ms, server, as_json):
    """Run handshakes and report per-message byte sizes."""
    if role:
        payload = {"role": role, "mode": mode if mode != "all" else "static-dh-rpk",
                   "seed": seed, "listen": listen, "connect": connect,
                   "timeout_ms": timeout_ms}
        row = _post(server, "/edhoc/endpoint", payload)
        if as_json:
            click.echo(json.dumps(row, indent=2))
        else:
            _print_size_row(row)
            click.echo(f"timing: {row['elapsed_ms']:.1f} ms wall-clock (indicative)")
        sys.exit(0 if row["complete"] else 1)
    payload = {"mode": mode, "seed": seed, "transport": transport,
               "tamper": tamper, "timeout_ms": timeout_ms}
    data = _post(server, "/edhoc/run", payload)
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        for row in data["rows"]:
            _print_size_row(row)
        total_ms = sum(r["elapsed_ms"] for r in data["rows"])
        click.echo(f"timing: {total_ms:.1f} ms wall-clock total (indicative)")
    sys.exit(0 if data["all_complete"] else 1)


@main.command()
@click.option("--transport", default="mem", show_default=True,
              type=click.Choice(["mem", "udp"]))
@click.option("--tamper", default=None, type=click.Choice(["tag"]),
              help="Corrupt the request tag in flight (negative control).")
@click.option("--replay", is_flag=True, help="Deliver the request twice.")
@server_option
@json_option
def oscore(transport, tamper, replay, server, as_json):
    """Protected request/response roundtrip with byte sizes."""
    data = _post(server, "/oscore/run",
                 {"transport": transport, "tamper": tamper, "replay": replay})
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        click.echo(data["headline"])
        click.echo(
            f"request:  coap={data['request_coap_len']} "
            f"oscore={data['request_oscore_len']}"
        )
        click.echo(
            f"response: coap={data['response_coap_len']} "
            f"oscore={data['response_oscore_len']}"
        )
        click.echo(
            f"padded 24-byte request fixture protects to "
            f"{data['padded_request_oscore_len']} bytes"
        )
        if data["replay_result"]:
            click.echo(f"replay: {data['replay_result']}")
        click.echo(f"timing: {data['elapsed_ms']:.1f} ms wall-clock (indicative)")
    sys.exit(0 if data["roundtrip"] == "ok" else 1)


@main.command()
@click.option("--mode", default="static-dh-rpk", show_default=True)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--transport", default="mem", show_default=True,
              type=click.Choice(["mem", "udp"]))
@server_option
@json_option
def combined(mode, seed, transport, server, as_json):
    """Handshake, then protect messages with the exported master secret."""
    data = _post(server, "/combined/run",
                 {"mode": mode, "seed": seed, "transport": transport})
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        _print_size_row(data["edhoc"])
        click.echo(
            f"exporter master secret: {data['master_secret_len']} bytes; "
            f"protected roundtrip: {data['roundtrip']} "
            f"(request={data['request_oscore_len']}B, "
            f"response={data['response_oscore_len']}B)"
        )
        click.echo(f"timing: {data['elapsed_ms']:.1f} ms wall-clock (indicative)")
    sys.exit(0 if data["ok"] else 1)


@main.group()
def vectors() -> None:
    """Crypto test-vector files (name=hexvalue blocks)."""


@vectors.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@server_option
def dump(out: Path, server):
    """Write the packaged vector files to a directory."""
    out.mkdir(parents=True, exist_ok=True)
    with _client(server) as client:
        names = client.get("/vectors").json()["files"]
        for name in names:
            text = client.get(f"/vectors/{name}").text
            (out / name).write_text(text)
            click.echo(f"wrote {out / name}")


@vectors.command()
@server_option
@json_option
def verify(server, as_json):
    """Check the provider against every packaged vector."""
    data = _post(server, "/vectors/verify", {})
    if as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        for entry in data["files"]:
            status = "ok" if entry["ok"] else f"FAILED at {entry['failures']}"
            click.echo(f"{entry['name']:<18} {entry['vectors']} vectors  {status}")
    sys.exit(0 if data["all_ok"] else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("coapsec.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
