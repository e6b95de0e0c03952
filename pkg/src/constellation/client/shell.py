"""`constellation-cli`: interactive CQL shell and one-shot query runner."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .connection import ConnectFailure, Connection, QueryFailure, connect

HISTORY_FILE = Path.home() / ".constellation_history"

try:
    import readline
except ImportError:  # non-readline platforms still get a usable shell
    readline = None


def render_result(result, fmt: str = "table") -> str:
    if not result.ok:
        suffix = f" at offset {result.offset}" if result.offset else ""
        return f"error [{result.error_class}]: {result.error}{suffix}"
    if result.kind == "find":
        members = result.devset.get("members", [])
        return f"devset {result.devset.get('name')}: " + ", ".join(members)
    if result.kind == "policy":
        return "policy installed"
    if result.kind == "import":
        return f"imported {len(result.imported)} devices"
    if result.result is None:
        return f"task {result.task_id} scheduled (periodic)"
    return render_task_result(result.result, fmt)


def render_task_result(doc: dict, fmt: str = "table") -> str:
    rows = [
        (o.get("deviceId", ""), o.get("kind", ""), str(o.get("value", "")),
         o.get("servedBy", ""), str(o.get("latencyMs", "")))
        for o in doc.get("perDevice", [])
    ]
    header = ("device", "outcome", "value", "servedBy", "latencyMs")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue().rstrip("\n")
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    if not doc.get("deadlineMet", True):
        lines.append("(deadline missed)")
    if doc.get("shortSet"):
        lines.append("(short set: fewer devices than requested)")
    return "\n".join(lines)


class Shell:
    def __init__(self, fmt: str, client_id: str, keystore: str):
        self.fmt = fmt
        self.client_id = client_id
        self.keystore = keystore
        self.conn: Connection | None = None

    def do_connect(self, address: str) -> str:
        if self.conn is not None and self.conn.open:
            self.conn.close()
        try:
            self.conn = connect(address, self.client_id, self.keystore)
        except (ConnectFailure, Exception) as exc:
            self.conn = None
            return f"connect failed: {exc}"
        return f"connected to {self.conn.node_id} at {address}"

    def do_close(self) -> str:
        if self.conn is None:
            return "not connected"
        count = self.conn.close()
        self.conn = None
        return f"closed; cancelled {count} tasks"

    def do_tasks(self) -> str:
        if self.conn is None:
            return "not connected"
        return "\n".join(self.conn.task_ids) or "(none)"

    def run_query(self, text: str) -> str:
        if self.conn is None or not self.conn.open:
            return "not connected (\\connect host:port first)"
        try:
            return render_result(self.conn.query(text), self.fmt)
        except QueryFailure as exc:
            return f"error [{exc.error_class}]: {exc}"

    def dispatch(self, line: str) -> str | None:
        line = line.strip()
        if not line:
            return None
        if line in ("\\quit", "\\q", "exit"):
            raise EOFError
        if line.startswith("\\connect"):
            parts = line.split()
            return self.do_connect(parts[1]) if len(parts) > 1 else "usage: \\connect host:port"
        if line == "\\close":
            return self.do_close()
        if line == "\\tasks":
            return self.do_tasks()
        if line.startswith("\\"):
            return f"unknown command {line.split()[0]}"
        return self.run_query(line)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="constellation-cli",
                                     description="Interactive CQL shell.")
    parser.add_argument("--connect", default=None, metavar="HOST:PORT")
    parser.add_argument("--client-id", default="cli")
    parser.add_argument("--keystore", required=True, metavar="DIR")
    parser.add_argument("--exec", dest="exec_query", default=None, metavar="QUERY",
                        help="run one query and exit")
    parser.add_argument("--format", choices=["table", "csv"], default="table")
    args = parser.parse_args(argv)

    shell = Shell(args.format, args.client_id, args.keystore)
    if args.connect:
        print(shell.do_connect(args.connect))
        if shell.conn is None:
            return 1

    if args.exec_query is not None:
        out = shell.run_query(args.exec_query)
        print(out)
        if shell.conn is not None:
            shell.conn.close()
        return 0 if not out.startswith("error") else 1

    if readline is not None:
        try:
            readline.read_history_file(HISTORY_FILE)
        except OSError:
            pass
    try:
        while True:
            try:
                line = input("cql> ")
            except KeyboardInterrupt:
                print()
                continue
            try:
                out = shell.dispatch(line)
            except EOFError:
                break
            if out:
                print(out)
    except EOFError:
        pass
    finally:
        if readline is not None:
            try:
                readline.write_history_file(HISTORY_FILE)
            except OSError:
                pass
        if shell.conn is not None:
            shell.conn.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
