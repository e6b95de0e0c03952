"""`constellation-node`: run a registry, leader, or edge node process."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .node import ClusterNode


def parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="constellation-node",
        description="Constellation cluster node (registry / leader / edge).",
    )
    parser.add_argument("--role", choices=["registry", "leader", "edge"], required=True)
    parser.add_argument("--node-id", default=None)
    parser.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    parser.add_argument("--registry", default=None, metavar="HOST:PORT")
    parser.add_argument("--bootstrap", default=None, metavar="PATH",
                        help="fallback leader list: one 'nodeId host:port' per line")
    parser.add_argument("--threshold", type=int, default=8,
                        help="max edges per leader (t)")
    parser.add_argument("--min-leaders", type=int, default=1)
    parser.add_argument("--keystore", default=None, metavar="DIR")
    parser.add_argument("--devices", default=None, metavar="DIR",
                        help="directory of device manifests this edge hosts")
    parser.add_argument("--potential", action="store_true",
                        help="join as a potential leader (edge until promoted)")
    parser.add_argument("--rtt-profile", default=None, metavar="JSON",
                        help='fixed per-leader RTTs, e.g. \'{"L1": 5, "L2": 20}\'')
    parser.add_argument("--store", default=None, metavar="PATH",
                        help="registry persistence file (append-only)")
    parser.add_argument("--clock", choices=["real", "sim"], default="real")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s " + (args.node_id or args.role) + " %(levelname)s %(message)s",
        stream=sys.stderr,
    )

    node_id = args.node_id or f"{args.role}-1"
    rtt_profile = json.loads(args.rtt_profile) if args.rtt_profile else None
    node = ClusterNode(
        node_id=node_id,
        role=args.role,
        listen=parse_listen(args.listen),
        registry_addr=args.registry,
        bootstrap_path=args.bootstrap,
        keystore_dir=args.keystore,
        devices_dir=args.devices,
        threshold=args.threshold,
        min_leaders=args.min_leaders,
        potential_leader=args.potential,
        rtt_profile=rtt_profile,
        store_path=args.store,
        sim_clock=args.clock == "sim",
    )
    print(f"READY {node_id} {node.address}", flush=True)
    node.run()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
