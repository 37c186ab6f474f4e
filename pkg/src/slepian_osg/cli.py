"""Command-line client.

Every subcommand builds a request model and runs the matching handler in
this process, or sends it to a running service when ``--server`` is given.
The response is printed as JSON on stdout.  Failures print
``{"category": ..., "message": ...}`` on stderr and exit with status 1;
usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pydantic

from .errors import OsgError
from .service import schemas
from .service.handlers import HANDLERS


def _build_parser():
    parser = argparse.ArgumentParser(prog="slepian-osg", description=__doc__.splitlines()[0])
    parser.add_argument("--server", metavar="URL", help="send requests to a running service")
    sub = parser.add_subparsers(dest="command", required=True)

    basis = sub.add_parser("basis", help="Slepian basis construction")
    bsub = basis.add_subparsers(dest="action", required=True)
    p = bsub.add_parser("build", help="build a basis for a region mask")
    p.add_argument("--mask", required=True, type=Path)
    p.add_argument("--Q", required=True, type=int, help="band limit (degrees 0..Q-1)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threshold", type=float, default=0.01, help="eigenvalue cut-off for A (default 0.01)")
    p.add_argument("--A", type=int, help="retain exactly A functions")
    p.add_argument("--quadrature", choices=["gauss", "midpoint"], default="gauss")
    p.set_defaults(handler="basis.build", inputs=["mask"])

    fit = sub.add_parser("fit", help="fit or update a model")
    fsub = fit.add_subparsers(dest="action", required=True)
    p = fsub.add_parser("init", help="fit a model on the initial block")
    p.add_argument("--basis", required=True, type=Path)
    p.add_argument("--block", required=True, type=Path)
    p.add_argument("--state", required=True, type=Path)
    p.add_argument("--P", type=int, default=2, help="VAR lag order (default 2)")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge added to the lag Gram matrix")
    p.add_argument("--retransform", action="store_true",
                   help="Gaussianize each block with cumulative instead of per-block parameters")
    p.add_argument("--tgh", action="store_true", help="also estimate a skewness parameter per coefficient")
    p.set_defaults(handler="fit.init", inputs=["basis", "block"])
    p = fsub.add_parser("update", help="ingest further blocks in time order")
    p.add_argument("--state", required=True, type=Path)
    p.add_argument("blocks", nargs="+", type=Path)
    p.add_argument("--trace-reference", type=Path,
                   help="state or truth container; appends RFD rows to <state>/trace.csv")
    p.set_defaults(handler="fit.update", inputs=["state", "blocks", "trace_reference"])

    p = sub.add_parser("emulate", help="draw emulated ensemble members")
    p.add_argument("--state", required=True, type=Path)
    p.add_argument("--members", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int)
    p.add_argument("--no-residuals", dest="residuals", action="store_false")
    p.set_defaults(handler="emulate", inputs=["state"])

    p = sub.add_parser("validate", help="compare emulations with reference blocks")
    p.add_argument("--reference", required=True, nargs="+", type=Path)
    p.add_argument("--emulated", required=True, type=Path)
    p.add_argument("--basis", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(handler="validate", inputs=["reference", "emulated", "basis"])

    p = sub.add_parser("synth", help="generate a synthetic ensemble stream with known truth")
    p.add_argument("--scenario", required=True, choices=["long", "short"])
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--members", type=int, default=10)
    p.add_argument("--blocks", type=int, help="only write the first N blocks")
    p.add_argument("--A", type=int, default=10)
    p.add_argument("--Q", type=int, default=40)
    p.add_argument("--P", type=int, default=2)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--rho", type=float, default=0.8)
    p.set_defaults(handler="synth", inputs=[])

    p = sub.add_parser("report", help="write CSV tables of indices and RFD traces")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--validation", type=Path)
    p.add_argument("--state", type=Path)
    p.set_defaults(handler="report", inputs=["validation", "state"])
    return parser


def _request_fields(args):
    skip = {"server", "command", "action", "handler", "inputs"}
    fields = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        fields[key] = value
    return fields


def _check_inputs(parser, args):
    for name in args.inputs:
        value = getattr(args, name, None)
        for path in value if isinstance(value, list) else [value]:
            if path is not None and not Path(path).exists():
                parser.error(f"input not found: {path}")


def _fail(category, message, code=1):
    print(json.dumps({"category": category, "message": message}), file=sys.stderr)
    return code


def _post(server, name, request):
    import httpx

    from .service.app import route_path

    try:
        resp = httpx.post(server.rstrip("/") + route_path(name), json=request.model_dump(), timeout=None)
    except httpx.HTTPError as exc:
        return None, _fail("connection", str(exc))
    if resp.status_code == 200:
        return resp.json(), 0
    try:
        body = resp.json()
    except ValueError:
        body = {"category": "http", "message": resp.text}
    if resp.status_code == 422:
        return None, _fail("usage", json.dumps(body.get("detail", body)), 2)
    return None, _fail(body.get("category", "http"), body.get("message", str(body)))


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    _check_inputs(parser, args)
    model_cls, handler = HANDLERS[args.handler]
    try:
        request = model_cls(**_request_fields(args))
    except pydantic.ValidationError as exc:
        parser.error(str(exc).replace("\n", " "))
    if args.server:
        body, code = _post(args.server, args.handler, request)
        if code:
            return code
    else:
        try:
            body = handler(request).model_dump()
        except OsgError as exc:
            return _fail(exc.category, str(exc))
        except OSError as exc:
            return _fail("io", str(exc))
    print(json.dumps(body, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
