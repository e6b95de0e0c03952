"""`constellation-gateway`: serve scripted things from a manifest directory."""

from __future__ import annotations

import argparse
import logging
import signal
import threading

from .service import GatewayServer, GatewayState


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="constellation-gateway",
        description="Mock device gateway speaking the thing REST protocol.",
    )
    parser.add_argument("--listen", default="127.0.0.1:8800", metavar="HOST:PORT")
    parser.add_argument("--things", required=True, metavar="DIR",
                        help="directory of thing manifest JSON files")
    parser.add_argument("--token", default=None, help="static bearer token")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    host, _, port = args.listen.rpartition(":")
    state = GatewayState(token=args.token)
    count = state.load_directory(args.things)
    server = GatewayServer(state, host or "127.0.0.1", int(port))
    server.start()
    print(f"gateway serving {count} things at {server.url}", flush=True)

    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
