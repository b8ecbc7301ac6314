"""Command line front end.

Subcommands: validate, serve, import, export, simulate. Heavy imports stay
inside the commands so `annoflow simulate` does not pay for the web stack.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click


@click.group()
@click.version_option(package_name="annoflow")
def main():
    """Protocol-driven annotation platform."""


@main.command()
@click.argument("ap_file", type=click.Path(exists=True, dir_okay=False))
def validate(ap_file):
    """Check a protocol file; print one finding per line.

    Exit status: 0 clean (warnings allowed), 1 validation errors,
    2 unparseable.
    """
    from .errors import ProtocolParseError
    from .protocol import parse_protocol, validate as validate_protocol

    text = Path(ap_file).read_text(encoding="utf-8")
    try:
        protocol = parse_protocol(text)
    except ProtocolParseError as exc:
        click.echo(f"ERROR {exc.code} - {exc.message} {exc.line}:{exc.col}")
        sys.exit(2)
    report = validate_protocol(protocol)
    rendered = report.render()
    if rendered:
        click.echo(rendered)
    if not report.ok:
        sys.exit(1)
    click.echo(f"OK {len(protocol.states)} states", err=True)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config file; ANNOFLOW_* variables override it.")
@click.option("--host", default=None, help="Override the bind address.")
@click.option("--port", default=None, type=int, help="Override the port.")
def serve(config_path, host, port):
    """Run the annotation server."""
    import uvicorn

    from .config import load_config
    from .server import build_app

    config = load_config(config_path)
    if host is not None:
        config.host = host
    if port is not None:
        config.port = port
    app = build_app(config)
    uvicorn.run(app, host=config.host, port=config.port)


def _open_store(store_path, config_path):
    from .config import load_config
    from .store import Datastore

    if store_path is None:
        store_path = load_config(config_path).store_path
    return Datastore(store_path)


@main.command(name="import")
@click.argument("tsv_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_path", default=None,
              help="Database file (defaults to the configured store).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
def import_cmd(tsv_file, store_path, config_path):
    """Load instances from a TSV file into the data table."""
    store = _open_store(store_path, config_path)
    report = store.import_tsv(Path(tsv_file).read_text(encoding="utf-8"))
    click.echo(f"inserted {report.inserted}")
    for reject in report.rejected:
        click.echo(f"line {reject.line}: {reject.reason}")


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Directory for the exported files.")
@click.option("--store", "store_path", default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--ap", "ap_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Protocol file fixing the export column order.")
def export(out, store_path, config_path, ap_file):
    """Write data.tsv, annotations.tsv, users.tsv, options.tsv and export.tsv."""
    from .config import load_config
    from .protocol import compile_source

    store = _open_store(store_path, config_path)
    if ap_file is None and config_path is not None:
        ap_file = load_config(config_path).ap_path
    order = None
    if ap_file:
        order = compile_source(Path(ap_file).read_text(encoding="utf-8")).state_order()

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = dict(store.export_tables())
    files["export"] = store.export_annotations(order)
    for name, text in files.items():
        path = out_dir / f"{name}.tsv"
        path.write_text(text, encoding="utf-8")
        click.echo(str(path))


@main.command()
@click.argument("ap_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--registry", "registry_spec", default=None,
              help="ApiRegistry to serve callAPI states, as module.path:attribute.")
@click.option("--show-path", is_flag=True,
              help="Also print the state path the session took.")
def simulate(ap_file, trace_file, registry_spec, show_path):
    """Replay a recorded answer trace headlessly and print the bundle.

    The trace file is JSON: {"instance": {...}?, "trace": [{"state", "answer"}]}.
    """
    from .config import load_registry
    from .engine import (
        Status,
        finish_bundle,
        instance_from_dict,
        replay_trace,
        trace_from_dicts,
    )
    from .errors import AnnoflowError, ProtocolParseError
    from .protocol import compile_protocol, parse_protocol, validate as validate_protocol

    try:
        protocol = parse_protocol(Path(ap_file).read_text(encoding="utf-8"))
    except ProtocolParseError as exc:
        click.echo(f"ERROR {exc.code} - {exc.message} {exc.line}:{exc.col}", err=True)
        sys.exit(2)
    report = validate_protocol(protocol)
    if not report.ok:
        click.echo(report.render(), err=True)
        sys.exit(1)
    machine = compile_protocol(protocol)

    payload = json.loads(Path(trace_file).read_text(encoding="utf-8"))
    instance = instance_from_dict(payload.get("instance", {"id": 0, "kind": "text",
                                                           "content": ""}))
    try:
        trace = trace_from_dicts(payload.get("trace", []))
        registry = load_registry(registry_spec)
        session = replay_trace(machine, instance, trace, registry)
        if session.status is not Status.COMPLETED:
            click.echo(f"ERROR replay-failed - {session.diagnostic}", err=True)
            sys.exit(1)
        bundle = finish_bundle(session)
    except AnnoflowError as exc:
        click.echo(f"ERROR {exc.code} - {exc.message}", err=True)
        sys.exit(1)
    if show_path:
        from .canon import canonical_json

        click.echo(canonical_json({"bundle": bundle.to_dict(),
                                   "path": list(session.path)}))
    else:
        click.echo(bundle.to_json())


if __name__ == "__main__":
    main()
