"""CLI: convert a generator checkpoint into a .urw weight container.

    urw-convert <ckpt> <out.urw> --arch cyclegan-r9 [--width W] [--prefix netG_A]

Exit codes: 0 success, 1 conversion failure (offenders listed), 2 bad flags.
"""

from __future__ import annotations

import argparse
import sys

from .container import write_container
from .mapping import ConversionError, convert_checkpoint, parse_arch


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="urw-convert",
                                 description="Checkpoint -> portable .urw weight container")
    ap.add_argument("ckpt", help="torch checkpoint (.pth) holding the generator state")
    ap.add_argument("out", help="output container path (.urw)")
    ap.add_argument("--arch", required=True, help="architecture descriptor, e.g. cyclegan-r9")
    ap.add_argument("--width", type=int, default=None,
                    help="base width override for reduced-width variants (default 64)")
    ap.add_argument("--prefix", default=None,
                    help="select one subtree of a multi-network checkpoint")
    ap.add_argument("--quiet", action="store_true", help="suppress the name-mapping audit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        arch = parse_arch(args.arch, args.width)
        result = convert_checkpoint(args.ckpt, arch, prefix=args.prefix)
    except ConversionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    write_container(args.out, result.entries)
    if not args.quiet:
        print(f"converted {args.ckpt} -> {args.out} ({len(result.entries)} parameters)")
        result.print_audit()
    return 0


if __name__ == "__main__":
    sys.exit(main())
