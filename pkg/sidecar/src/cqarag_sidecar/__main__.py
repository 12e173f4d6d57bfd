"""Entry point: ``cqarag-sidecar [--config file.json] [--host H] [--port P]``.

Model selection comes from the config file / SIDECAR_* environment
variables; ``--embed-model debug-hash-1024`` etc. override per capability.
"""

from __future__ import annotations

import argparse
import sys

from .app import serve
from .config import load_config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cqarag-sidecar", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--embed-model")
    parser.add_argument("--generate-model")
    parser.add_argument("--triplets-model")
    parser.add_argument("--ner-model")
    args = parser.parse_args(argv)
    config = load_config(
        path=args.config,
        host=args.host,
        port=args.port,
        embed_model=args.embed_model,
        generate_model=args.generate_model,
        triplets_model=args.triplets_model,
        ner_model=args.ner_model,
    )
    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
