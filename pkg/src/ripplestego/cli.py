"""Command-line entry point: keygen, embed, extract, analyze, shield, benchmark.

Exit codes: 0 success, 1 usage or parse error, 2 capacity, 3 extraction integrity,
4 shield failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import crypto_layer as cl
from . import embedder as E
from . import rs_shield as R
from .ga_engine import AgaParams
from .image_core import PnmError, read_image_file, write_image_file
from .metrics import psnr, quality_report
from .transform import TransformParams

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_INTEGRITY, EXIT_SHIELD = 0, 1, 2, 3, 4

BENCH_COLUMNS = (
    "image",
    "transform",
    "payload_bpp",
    "psnr_before_opap",
    "psnr_after_opap",
    "dR",
    "dS",
    "dR_after_shield",
    "runtime",
)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config

_EMBED_KEYS = {"k", "eta", "V", "mode", "use_opap", "use_aga_mapping", "guard", "refine"}
_TRANSFORM_KEYS = {"transform": "kind", "levels": "levels", "support_c": "support_c", "degree_d": "degree_d", "quant_step": "quant_step"}
_SHIELD_KEYS = {f.name for f in dataclasses.fields(R.ShieldParams)} - {"seed"}
_AGA_KEYS = {f.name for f in dataclasses.fields(AgaParams)} - {"seed"}
_SHIELD_AGA_KEYS = {"shield_population_size": "population_size", "shield_max_generations": "max_generations"}
ALL_KEYS = {"seed"} | _EMBED_KEYS | set(_TRANSFORM_KEYS) | _SHIELD_KEYS | _AGA_KEYS | set(_SHIELD_AGA_KEYS)


@dataclasses.dataclass(frozen=True)
class Config:
    embed: E.EmbedParams
    shield: R.ShieldParams
    shield_aga: AgaParams
    seed: int


def _coerce(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", "auto"):
        return None
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ALL_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(value)
    return out


def build_config(values: dict) -> Config:
    """Validate a flat key/value mapping against the owning dataclasses."""
    unknown = set(values) - ALL_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    seed = values.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise UsageError("seed must be an integer")
    try:
        tp = TransformParams(**{v: values[k] for k, v in _TRANSFORM_KEYS.items() if k in values} | ({} if "transform" in values else {"kind": "IWT"}))
        aga = AgaParams(**{k: values[k] for k in _AGA_KEYS if k in values}, seed=seed, **({} if "max_generations" in values else {"max_generations": 40}))
        ep = E.EmbedParams(transform=tp, aga=aga, seed=seed, **{k: values[k] for k in _EMBED_KEYS if k in values})
        sp = R.ShieldParams(seed=seed, **{k: values[k] for k in _SHIELD_KEYS if k in values})
        sa = AgaParams(population_size=8, max_generations=6, seed=seed)
        sa = dataclasses.replace(sa, **{v: values[k] for k, v in _SHIELD_AGA_KEYS.items() if k in values})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if ep.kind == "DRT" and (ep.v > 4 or tp.quant_step != 1.0):
        raise UsageError("DRT embedding needs V <= 4 and quant_step = 1")
    if ep.kind == "IWT" and ep.v > 16:
        raise UsageError("IWT embedding needs V <= 16")
    return Config(ep, sp, sa, seed)


def load_config(args) -> Config:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    for item in getattr(args, "set", None) or []:
        values.update(parse_config_text(item))
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    if getattr(args, "transform", None):
        values["transform"] = args.transform
    if getattr(args, "k", None) is not None:
        values["k"] = args.k
    return build_config(values)


# ---------------------------------------------------------------- helpers


def _read_image(path):
    try:
        return read_image_file(path)
    except (OSError, PnmError) as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc


def _key(path, private: bool) -> E.StegoKey:
    try:
        n, exp = cl.read_key(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read key: {exc}") from exc
    bits = n.bit_length()
    pair = cl.RsaKeyPair(n, 0, exp, bits) if private else cl.RsaKeyPair(n, exp, 0, bits)
    return E.StegoKey(pair)


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _finite(x):
    return None if x is None or math.isinf(x) else round(float(x), 6)


# ---------------------------------------------------------------- commands


def cmd_keygen(args) -> int:
    try:
        pair = cl.keygen(args.bits, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    try:
        cl.write_key(out.with_suffix(".pub"), pair.n, pair.e)
        cl.write_key(out.with_suffix(".key"), pair.n, pair.d)
    except OSError as exc:
        raise UsageError(f"cannot write key: {exc}") from exc
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = load_config(args)
    cover = _read_image(args.cover)
    try:
        message = Path(args.message).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read message: {exc}") from exc
    key = _key(args.key, private=False)
    try:
        stego, report = E.embed(cover, message, key, cfg.embed)
    except E.CapacityError as exc:
        print(f"capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    write_image_file(args.out, stego)
    Path(args.report or str(args.out) + ".json").write_text(report.to_json() + "\n")
    return EXIT_OK


def _extract(stego, key, cfg):
    return E.extract(stego, key, cfg.embed)


def cmd_extract(args) -> int:
    cfg = load_config(args)
    stego = _read_image(args.stego)
    key = _key(args.key, private=True)
    try:
        plain = _extract(stego, key, cfg)
    except (cl.NoPayloadError, cl.IntegrityError) as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    Path(args.out).write_bytes(plain)
    return EXIT_OK


def analyze_report(img, ref=None, masks: int = 10, seed: int = 0) -> dict:
    s = R.rs_statistics(img)
    per_mask = []
    for m in R.random_masks(masks, 4, seed):
        ms = R.rs_statistics(img, m)
        per_mask.append({"mask": [int(v) for v in m], **{k: round(v, 6) for k, v in ms.as_dict().items()}})
    rep = {k: round(v, 6) for k, v in s.as_dict().items()}
    rep["d_statistic"] = round(float(np.mean([abs(p["dR"]) + abs(p["dS"]) for p in per_mask])), 6)
    rep["per_mask"] = per_mask
    if ref is not None:
        q = quality_report(ref, img)
        rep["quality"] = q
        rep["psnr_db"] = q["psnr_db"]
    return rep


def cmd_analyze(args) -> int:
    img = _read_image(args.image)
    ref = _read_image(args.ref) if args.ref else None
    seed = args.seed if args.seed is not None else 0
    _dump(analyze_report(img, ref, seed=seed), args.out)
    return EXIT_OK


def run_shield(stego, key, cfg: Config):
    """Shield ``stego`` while guarding its payload. Returns (ShieldResult, plaintext)."""
    plain = E.extract(stego, key, cfg.embed)
    oracle = E.payload_oracle(key, cfg.embed, plain)
    local = E.block_oracle(stego, key, cfg.embed)
    return R.shield(stego, oracle, cfg.shield, cfg.shield_aga, block_oracle=local), plain


def cmd_shield(args) -> int:
    cfg = load_config(args)
    stego = _read_image(args.stego)
    key = _key(args.key, private=True)
    try:
        res, _ = run_shield(stego, key, cfg)
    except (cl.NoPayloadError, cl.IntegrityError) as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    write_image_file(args.out, res.image)
    report = {
        "before": res.before.as_dict(),
        "after": res.after.as_dict(),
        "blocks_adjusted": res.blocks_adjusted,
        "status": "ok" if res.success else "shield failed",
        "psnr_shielded_vs_stego": _finite(psnr(stego, res.image)),
    }
    _dump(report, args.report or str(args.out) + ".json")
    if not res.success:
        print("shield failed: stop criterion not reached", file=sys.stderr)
        return EXIT_SHIELD
    return EXIT_OK


def payload_message(nbytes: int, seed: int) -> bytes:
    return np.random.default_rng(seed).integers(0, 256, nbytes, dtype=np.uint8).tobytes()


def bench_candidates(kind: str):
    """(V, k) pairs for a transform, ordered by bits per block then by lower k."""
    vmax = 16 if kind == "IWT" else 4
    vs = [v for v in (1, 2, 3, 4, 8, 12, 16) if v <= vmax]
    return sorted(((v, k) for v in vs for k in (1, 2, 3, 4)), key=lambda p: (p[0] * p[1], p[1]))


def embed_at_payload(cover, message, key, base: E.EmbedParams, kind: str):
    """Embed with the cheapest (V, k) of ``kind`` that holds the message."""
    tp = dataclasses.replace(base.transform, kind=kind, quant_step=1.0)
    for V, k in bench_candidates(kind):
        params = dataclasses.replace(base, transform=tp, V=V, k=k, guard=None, refine=None)
        try:
            stego, rep = E.embed(cover, message, key, params)
        except E.CapacityError:
            continue
        return stego, rep, params
    raise E.CapacityError(f"{kind}: payload of {len(message)} bytes does not fit")


def benchmark_rows(images, payloads, cfg: Config, timing: bool = True, transforms=("IWT", "DRT"), shield_rows: bool = True):
    key = E.StegoKey(cl.keygen(512, cfg.seed))
    for name, cover in images:
        for bpp in payloads:
            nbytes = int(bpp * cover.height * cover.width) // 8
            message = payload_message(nbytes, cfg.seed)
            for kind in transforms:
                t0 = time.perf_counter()
                try:
                    stego, rep, params = embed_at_payload(cover, message, key, cfg.embed, kind)
                except E.CapacityError:
                    yield [name, kind, bpp, "", "", "", "", "", ""]
                    continue
                s = R.rs_statistics(stego)
                dr_after = ""
                if shield_rows and nbytes:
                    oracle = E.payload_oracle(key, params, message)
                    res = R.shield(stego, oracle, cfg.shield, cfg.shield_aga, block_oracle=E.block_oracle(stego, key, params))
                    dr_after = _fmt(res.after.dR)
                runtime = _fmt(time.perf_counter() - t0) if timing else ""
                yield [name, kind, bpp, _fmt(rep.psnr_before_opap), _fmt(rep.psnr_after_opap), _fmt(s.dR), _fmt(s.dS), dr_after, runtime]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.4f}"


def cmd_benchmark(args) -> int:
    cfg = load_config(args)
    d = Path(args.images)
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".pnm")) if d.is_dir() else []
    if not files:
        raise UsageError(f"no PGM/PPM images in {args.images}")
    try:
        payloads = [float(x) for x in args.payloads.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad payload list: {exc}") from exc
    if not payloads or any(p < 0 for p in payloads):
        raise UsageError("payloads must be a non-empty list of non-negative bpp values")
    images = [(p.stem, _read_image(p)) for p in files]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for row in benchmark_rows(images, payloads, cfg, timing=not args.no_timing, shield_rows=not args.no_shield):
            w.writerow(row)
            fh.flush()
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ripplestego", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None, help="global seed")
        if config:
            p.add_argument("--config", help="key = value file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
            p.add_argument("--transform", choices=("IWT", "DRT"))
            p.add_argument("-k", type=int, default=None, help="LSBs per coefficient")

    p = sub.add_parser("keygen", help="deterministic RSA key pair")
    p.add_argument("--bits", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="path stem; writes STEM.pub and STEM.key")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("embed", help="hide a message")
    p.add_argument("--cover", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--key", required=True, help="public key file")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="report path (default OUT.json)")
    common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover a message")
    p.add_argument("--stego", required=True)
    p.add_argument("--key", required=True, help="private key file")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="RS statistics and quality report")
    p.add_argument("--image", required=True)
    p.add_argument("--ref", help="cover image for PSNR")
    p.add_argument("--out", help="write JSON here instead of stdout")
    common(p, config=False)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("shield", help="restore RS statistics without breaking the payload")
    p.add_argument("--stego", required=True)
    p.add_argument("--key", required=True, help="private key file")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="report path (default OUT.json)")
    common(p)
    p.set_defaults(func=cmd_shield)

    p = sub.add_parser("benchmark", help="PSNR and RS table over an image directory")
    p.add_argument("--images", required=True)
    p.add_argument("--payloads", default="0.03125,0.0625", help="comma-separated bpp values")
    p.add_argument("--out", required=True)
    p.add_argument("--no-timing", action="store_true", help="leave the runtime column empty")
    p.add_argument("--no-shield", action="store_true", help="skip the shield pass")
    common(p)
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
