"""Stand-in external checker driven entirely by argv.

Exercises the tool runner contract from the outside: progress lines on
stdout, a diagnostics file next to the article, exit codes, stderr noise,
in-place rewrites, and a hang mode (optionally with a child process) for
cancellation tests.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("article")
    parser.add_argument("--progress", default="", help="name:total,name:total,...")
    parser.add_argument("--step-delay", type=float, default=0.0)
    parser.add_argument("--err", default="", help="line:col:code,... written as .err")
    parser.add_argument("--err-raw", default="", help="verbatim .err content")
    parser.add_argument("--stderr", default="")
    parser.add_argument("--exit", dest="exit_code", type=int, default=0)
    parser.add_argument("--rewrite", choices=["upper", "strip"], default=None)
    parser.add_argument("--hang", action="store_true")
    parser.add_argument("--spawn-child", action="store_true")
    parser.add_argument("--pid-file", default="")
    args = parser.parse_args()

    article = Path(args.article)

    pids = [os.getpid()]
    child = None
    if args.spawn_child:
        child = subprocess.Popen(
            [sys.executable, "-c", "import time; time.sleep(3600)"]
        )
        pids.append(child.pid)
    if args.pid_file:
        Path(args.pid_file).write_text("".join(f"{p}\n" for p in pids))

    for spec in filter(None, args.progress.split(",")):
        name, _, total_text = spec.partition(":")
        total = int(total_text)
        for current in range(1, total + 1):
            print(f"PASS {name} {current}/{total}", flush=True)
            if args.step_delay:
                time.sleep(args.step_delay)

    if args.hang:
        time.sleep(3600)

    if args.rewrite == "upper":
        article.write_text(article.read_text().upper())
    elif args.rewrite == "strip":
        text = article.read_text()
        article.write_text(
            "".join(line.rstrip() + "\n" for line in text.splitlines())
        )

    err_path = article.with_suffix(".err")
    if args.err_raw:
        err_path.write_text(args.err_raw)
    elif args.err:
        rows = []
        for triple in args.err.split(","):
            line, col, code = triple.split(":")
            rows.append(f"{line} {col} {code}\n")
        err_path.write_text("".join(rows))

    if args.stderr:
        print(args.stderr, file=sys.stderr, flush=True)

    if child is not None:
        child.kill()
    return args.exit_code


if __name__ == "__main__":
    sys.exit(main())
