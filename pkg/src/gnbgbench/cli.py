"""Thin-client CLI over the workbench service.

Every subcommand speaks to the FastAPI app: against a remote server when
--server is given, otherwise through an in-process ASGI transport (same
HTTP surface, no socket). File outputs are written client-side from the
exact text the service returns, so byte-level determinism survives the hop.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service.app import app as asgi_app

    return httpx.Client(
        transport=httpx.ASGITransport(app=asgi_app),
        base_url="http://workbench.local",
        timeout=None,
    )


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


server_option = click.option("--server", default=None, metavar="URL",
                             help="Remote service URL; default runs the app in-process.")


@click.group()
def main():
    """Composition-function optimization workbench."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Start the workbench service."""
    import uvicorn

    uvicorn.run("gnbgbench.service.app:app", host=host, port=port)


@main.command("gen-instance")
@click.option("--dim", default=30, show_default=True)
@click.option("--components", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rotation/--no-rotation", default=False, show_default=True)
@click.option("--lb", default=-100.0, show_default=True)
@click.option("--ub", default=100.0, show_default=True)
@click.option("--spec-json", default=None, metavar="PATH",
              help="Full generation-spec JSON; overrides the flag values above.")
@click.option("--out", required=True, metavar="PATH")
@server_option
def gen_instance(dim, components, seed, rotation, lb, ub, spec_json, out, server):
    """Generate a certified instance and write its JSON file."""
    spec = {"dim": dim, "components": components, "rotation": rotation, "lb": lb, "ub": ub}
    if spec_json:
        spec = json.loads(Path(spec_json).read_text(encoding="utf-8"))
    with _client(server) as client:
        doc = _post(client, "/instances/generate", {"spec": spec, "seed": seed})
    Path(out).write_text(doc["instance_json"], encoding="utf-8")
    click.echo(f"wrote {out} (dim={doc['instance']['dim']}, "
               f"components={len(doc['instance']['components'])})")


@main.command()
@click.option("--suite", "suite_path", required=True, metavar="PATH",
              help="Suite config JSON.")
@click.option("--polish-variant", type=click.Choice(["compliant", "leaky"]),
              default="compliant", show_default=True)
@click.option("--out", "out_dir", required=True, metavar="DIR")
@server_option
def run(suite_path, polish_variant, out_dir, server):
    """Run a benchmark suite and write runs.csv, summary.csv, report.json."""
    suite = json.loads(Path(suite_path).read_text(encoding="utf-8"))
    base_dir = str(Path(suite_path).resolve().parent)
    with _client(server) as client:
        doc = _post(client, "/suites",
                    {"suite": suite, "variant": polish_variant, "base_dir": base_dir})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(doc["runs_csv"], encoding="utf-8")
    (out / "summary.csv").write_text(doc["summary_csv"], encoding="utf-8")
    (out / "report.json").write_text(doc["report_json"], encoding="utf-8")
    click.echo(f"total wins {doc['total_wins']}/{doc['total_runs']} -> {out_dir}")


@main.command()
@click.option("--in", "in_path", required=True, metavar="PATH",
              help="summary.csv produced by `run`.")
@click.option("--n-runs", default=31, show_default=True)
@server_option
def classify(in_path, n_runs, server):
    """Classify per-function gap signatures from a summary CSV."""
    rows = []
    lines = Path(in_path).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        fid, wins, mean_gap, std_gap = line.split(",")[:4]
        rows.append({
            "function_id": int(fid),
            "wins": int(wins),
            "mean_gap": float(mean_gap),
            "std_gap": float(std_gap),
        })
    with _client(server) as client:
        doc = _post(client, "/classify", {"rows": rows, "n_runs": n_runs})
    for row in doc["rows"]:
        click.echo(f"f{row['function_id']}: {row['label']}")


@main.command()
@click.option("--proposer", required=True, metavar="SPEC",
              help='Proposal source: "scripted:proposals.json" or "cmd:<command>".')
@click.option("--suite", "suite_path", required=True, metavar="PATH")
@click.option("--max-iters", default=30, show_default=True)
@click.option("--state-dir", default="loop_state", show_default=True, metavar="DIR")
@click.option("--timeout", default=300.0, show_default=True,
              help="External-proposer timeout in seconds.")
@server_option
def loop(proposer, suite_path, max_iters, state_dir, timeout, server):
    """Drive the configuration-research loop."""
    suite = json.loads(Path(suite_path).read_text(encoding="utf-8"))
    base_dir = str(Path(suite_path).resolve().parent)
    if proposer.startswith("scripted:"):
        items = json.loads(Path(proposer[len("scripted:"):]).read_text(encoding="utf-8"))
        spec = {"scripted": items, "timeout": timeout}
    elif proposer.startswith("cmd:"):
        spec = {"command": proposer[len("cmd:"):], "timeout": timeout}
    else:
        raise click.ClickException("proposer must start with 'scripted:' or 'cmd:'")
    with _client(server) as client:
        doc = _post(client, "/loop", {
            "suite": suite,
            "state_dir": state_dir,
            "proposer": spec,
            "max_iters": max_iters,
            "base_dir": base_dir,
        })
    for e in doc["entries"]:
        click.echo(f"{e['tag']}\t{e['total_wins']}\t{e['hard_wins']}\t{e['status']}\t"
                   f"{e['description']}")
    click.echo(f"best wins: {doc['best_wins']}")


if __name__ == "__main__":
    sys.exit(main())
