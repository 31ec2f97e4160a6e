"""Command-line front end.

Exit codes: 0 not detected, 1 vulnerable (or, for ``batch``, a verdict that
differs from the dataset's expectation), 2 analysis error, 64 bad usage,
65 bad input data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import httpx

from . import __version__
from .bytecode import Selector, SignatureError, selector_of
from .callgraph import DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES, AnalysisError, analyze_code
from .cfg import dump_cfg
from .dataset import DatasetError, load_dataset
from .pipeline import (
    EXIT_DATA,
    EXIT_ERROR,
    EXIT_USAGE,
    Limits,
    analyze_target,
    report_name,
    run_batch,
    write_batch,
)
from .state import RPC_URL_ENV, CachingProvider, StateError, fixture_provider, normalize_address, rpc_provider
from .taint import ProfileError, load_profile

log = logging.getLogger("flashtaint")


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _selector(text: str) -> Selector:
    try:
        return Selector.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _address(text: str) -> str:
    try:
        return normalize_address(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return value


def _non_negative(text: str) -> int:
    return 0 if text.strip() == "0" else _positive(text)


def _add_provider(p: argparse.ArgumentParser, server: bool = True) -> None:
    g = p.add_argument_group("state")
    g.add_argument("--fixtures", metavar="DIR", help="read code and storage from a fixture directory")
    g.add_argument("--rpc-url", metavar="URL", help=f"JSON-RPC endpoint (default: ${RPC_URL_ENV})")
    if server:
        g.add_argument("--server", metavar="URL", help="send the request to a running `flashtaint serve`")


def _add_analysis(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="expanded", help="baseline, expanded, or a profile file")
    p.add_argument("--max-depth", type=_non_negative, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--max-nodes", type=_positive, default=DEFAULT_MAX_NODES)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flashtaint", description="Taint analysis of EVM contracts for price manipulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyze one contract entry point")
    a.add_argument("--address", type=_address, required=True, help="contract whose code runs")
    a.add_argument("--storage-address", type=_address, help="contract whose storage is used (default: --address)")
    a.add_argument("--selector", type=_selector, required=True, help="entry function selector, 0x + 8 hex digits")
    a.add_argument("--block", type=_positive, required=True)
    _add_analysis(a)
    _add_provider(a)
    a.add_argument("--out", metavar="DIR", help="write <address>-<selector>-<block>.report here instead of stdout")
    a.add_argument("--graph-dump", metavar="FILE", help="write the sub-call graph as DOT")
    a.add_argument("--facts-dump", metavar="DIR", help="write every relation as <Relation>.facts")
    a.add_argument("--cfg-dump", metavar="FILE", help="write the root contract's basic blocks")

    b = sub.add_parser("batch", help="analyze every incident of a dataset")
    b.add_argument("dataset", help="CSV dataset file")
    _add_analysis(b)
    _add_provider(b)
    b.add_argument("--parallel", type=_positive, default=1)
    b.add_argument("--out", metavar="DIR", help="write per-incident reports and summary.json here")

    s = sub.add_parser("selectors", help="compute selectors of text signatures")
    s.add_argument("signatures", help="file with one signature per line")
    s.add_argument("--check", metavar="FILE", help="expected selectors (signature,hex CSV or 'signature hex' lines)")
    s.add_argument("--discrepancies", metavar="FILE", help="signatures whose expected value is known to be wrong")

    v = sub.add_parser("serve", help="run the HTTP service")
    _add_provider(v, server=False)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=_positive, default=8000)
    return parser


def _provider(args: argparse.Namespace) -> CachingProvider:
    if args.fixtures and args.rpc_url:
        raise _Usage("give either --fixtures or --rpc-url, not both")
    try:
        if args.fixtures:
            return CachingProvider(fixture_provider(args.fixtures))
        return CachingProvider(rpc_provider(args.rpc_url))
    except StateError as exc:
        raise _Usage(str(exc)) from None


def _profile(name: str):
    try:
        return load_profile(name)
    except ProfileError as exc:
        raise _Usage(str(exc)) from None


def _post(server: str, path: str, body: dict) -> dict:
    try:
        resp = httpx.post(server.rstrip("/") + path, json=body, timeout=600)
    except httpx.HTTPError as exc:
        raise AnalysisError(f"server unreachable: {exc}") from None
    if resp.status_code in (400, 422):
        detail = resp.json().get("detail")
        if isinstance(detail, dict) and detail.get("kind") == "dataset":
            raise DatasetError(detail.get("line") or 0, detail["message"].split(": ", 1)[-1])
        raise _Usage(detail["message"] if isinstance(detail, dict) else str(detail))
    if resp.status_code != 200:
        raise AnalysisError(f"server answered {resp.status_code}")
    return resp.json()


def _emit_report(text: str, name: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text)
        print(path / name, file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _profile(args.profile)
    name = report_name(args.address, args.selector, args.block)
    if args.server:
        if args.graph_dump or args.facts_dump or args.cfg_dump or args.fixtures or args.rpc_url:
            raise _Usage("--server cannot be combined with state or dump options")
        body = {
            "address": args.address, "storage_address": args.storage_address, "selector": args.selector.hex,
            "block": args.block, "profile": args.profile, "max_depth": args.max_depth, "max_nodes": args.max_nodes,
        }
        resp = _post(args.server, "/analyze", body)
        if resp["status"] == "error":
            raise AnalysisError(resp["error"])
        _emit_report(json.dumps(resp["report"], sort_keys=True, indent=2) + "\n", name, args.out)
        return resp["exit_code"]
    state = _provider(args)
    limits = Limits(args.max_depth, args.max_nodes)
    if args.cfg_dump:
        cfg, _ = analyze_code(state.get_code(args.address, args.block).code)
        Path(args.cfg_dump).write_text(dump_cfg(cfg))
    result = analyze_target(state, args.address, args.selector, args.block, config, args.storage_address, limits)
    if args.graph_dump:
        Path(args.graph_dump).write_text(result.scg.to_dot())
    if args.facts_dump:
        result.report.run.fixpoint.write_tsv(args.facts_dump)
    for d in result.scg.diagnostics:
        log.info("%s", d)
    _emit_report(result.report.dumps(), name, args.out)
    return result.exit_code


def cmd_batch(args: argparse.Namespace) -> int:
    config = _profile(args.profile)
    try:
        text = Path(args.dataset).read_text()
    except OSError as exc:
        raise _Usage(f"cannot read dataset: {exc}") from None
    if args.server:
        if args.fixtures or args.rpc_url:
            raise _Usage("--server cannot be combined with --fixtures or --rpc-url")
        body = {"dataset": text, "profile": args.profile, "parallel": args.parallel,
                "max_depth": args.max_depth, "max_nodes": args.max_nodes}
        resp = _post(args.server, "/batch", body)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for name, report in resp["reports"].items():
                (out / name).write_text(report)
            (out / "summary.json").write_text(json.dumps(resp["summary"], sort_keys=True, indent=2) + "\n")
        sys.stdout.write(resp["table"])
        return resp["exit_code"]
    records = load_dataset(args.dataset)
    state = _provider(args)
    summary = run_batch(records, state, config, Limits(args.max_depth, args.max_nodes), args.parallel)
    if args.out:
        write_batch(summary, args.out)
    sys.stdout.write(summary.table())
    return summary.exit_code


def _read_expected(path: str) -> dict[str, str]:
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if body and body[0].replace(" ", "").startswith("signature,"):
        return {row["signature"].strip(): row["hex"].strip().lower() for row in csv.DictReader(body)}
    out = {}
    for ln in body:
        sig, _, hexval = ln.replace("=", " ").strip().rpartition(" ")
        out[sig.strip()] = hexval.strip().lower()
    return out


def cmd_selectors(args: argparse.Namespace) -> int:
    try:
        lines = Path(args.signatures).read_text().splitlines()
    except OSError as exc:
        raise _Usage(f"cannot read signatures: {exc}") from None
    rows = []
    for lineno, raw in enumerate(lines, 1):
        sig = raw.split("#", 1)[0].strip()
        if not sig:
            continue
        try:
            rows.append((sig, selector_of(sig).hex))
        except SignatureError as exc:
            raise DatasetError(lineno, str(exc)) from None
    for sig, hexval in rows:
        print(f"{sig}\t{hexval}")
    if not args.check:
        return 0
    expected = _read_expected(args.check)
    documented = set(_read_expected(args.discrepancies)) if args.discrepancies else set()
    bad = 0
    matched = 0
    for sig, hexval in rows:
        want = expected.get(sig)
        if want is None:
            continue
        if want == hexval:
            matched += 1
        elif sig in documented:
            print(f"documented discrepancy: {sig} computed {hexval}, listed {want}", file=sys.stderr)
        else:
            bad += 1
            print(f"MISMATCH: {sig} computed {hexval}, expected {want}", file=sys.stderr)
    print(f"{matched} of {len(rows)} match", file=sys.stderr)
    return 1 if bad else 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_provider(args)), host=args.host, port=args.port)
    return 0


COMMANDS = {"analyze": cmd_analyze, "batch": cmd_batch, "selectors": cmd_selectors, "serve": cmd_serve}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        print(f"flashtaint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"flashtaint: bad input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AnalysisError, StateError) as exc:
        print(f"flashtaint: analysis error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def run() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    run()
