"""Acceptance criteria C1-C11. Each test prints one PASS/FAIL line at its stated tolerance.

Run under pytest (lines are repeated in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""

import filecmp
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ripplestego import cli
from ripplestego import crypto_layer as cl
from ripplestego import embedder as E
from ripplestego import rs_shield as R
from ripplestego.ga_engine import PERMUTATION, AgaParams, crossover_permutation, evolve, mutate
from ripplestego.image_core import Image, read_image_file, write_image_file
from ripplestego.metrics import psnr
from ripplestego.transform import TransformParams, drt_forward, drt_inverse, iwt_forward, iwt_inverse

skimage = pytest.importorskip("skimage")
from ripplestego import corpus  # noqa: E402


def record(num: int, ok: bool, text: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} C{num} {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def images10():
    return [(name, corpus.load(name)) for name in corpus.EXTENDED_10]


@pytest.fixture(scope="module")
def images8(images10):
    return [(n, img) for n, img in images10 if n in corpus.STANDARD_8]


@pytest.fixture(scope="module")
def bench_rows(images8):
    """Benchmark rows at 1/32 bpp for both transforms (no shield, no timing)."""
    cfg = cli.build_config({})
    rows = list(cli.benchmark_rows(images8, [0.03125], cfg, timing=False, shield_rows=False))
    return [dict(zip(cli.BENCH_COLUMNS, r)) for r in rows]


# ---------------------------------------------------------------- C1, C2: OPAP


def brute_force_error(p, p_mod, k):
    """Smallest |v - p| over v in [0, 255] sharing p_mod's k LSBs."""
    mask = (1 << k) - 1
    return min(abs(v - p) for v in range(256) if v & mask == p_mod & mask)


def test_c1_opap_oracle():
    t0 = time.perf_counter()
    mismatches = lsb_bad = checked = 0
    for k in (2, 3, 4):
        p = np.repeat(np.arange(256), 1 << k)
        msg = np.tile(np.arange(1 << k), 256)
        p_mod = E.lsb_substitute(p, msg, k)
        out = E.opap_adjust(p, p_mod, k)
        lsb_bad += int(((out & ((1 << k) - 1)) != msg).sum())
        clamp = (p_mod >= 256 - (1 << k)) | (p_mod < (1 << k))
        for pi, qi, oi in zip(p[~clamp].tolist(), p_mod[~clamp].tolist(), out[~clamp].tolist()):
            checked += 1
            mismatches += abs(oi - pi) != brute_force_error(pi, qi, k)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and lsb_bad == 0 and dt < 1.0
    assert record(1, ok, f"OPAP vs brute force: {mismatches} mismatches over {checked} unclamped pairs, {lsb_bad} LSB violations, {dt:.2f} s (limit 1 s)")


def test_c2_worked_example():
    p_mod = E.lsb_substitute(16, 0b1111, 4)
    out = E.opap_adjust(16, p_mod, 4)
    plain_err, opap_err = abs(p_mod - 16), abs(out - 16)
    assert record(2, plain_err == 15 and opap_err == 1, f"p=16 msg=1111 k=4: plain error {plain_err} (want 15), OPAP error {opap_err} (want 1)")


# ---------------------------------------------------------------- C3, C4: transforms


def test_c3_iwt_reversibility():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    failures = 0
    for i in range(1000):
        h, w = 8 * int(rng.integers(1, 9)), 8 * int(rng.integers(1, 9))
        img = rng.integers(0, 256, (h, w))
        failures += not np.array_equal(iwt_inverse(iwt_forward(img, 3)), img)
    dt = time.perf_counter() - t0
    assert record(3, failures == 0 and dt < 10, f"IWT round trip: {failures}/1000 failures, {dt:.2f} s (limit 10 s)")


def test_c4_drt_reconstruction(images10):
    params = TransformParams(kind="DRT")
    t0 = time.perf_counter()
    worst_psnr, worst_err = math.inf, 0
    for _, img in images10:
        x = img.data[:, :, 0]
        back = drt_inverse(drt_forward(x, params), clamp=False)
        mse = float(((back - x) ** 2).mean())
        worst_psnr = min(worst_psnr, math.inf if mse == 0 else 10 * math.log10(255**2 / mse))
        q = drt_inverse(drt_forward(x, params, quantize=True))
        worst_err = max(worst_err, int(np.abs(q.astype(int) - x.astype(int)).max()))
    dt = time.perf_counter() - t0
    ok = worst_psnr >= 80 and worst_err <= 1 and dt < 60
    assert record(4, ok, f"DRT on {len(images10)} images: min unquantized PSNR {worst_psnr:.1f} dB (>= 80), quantized max error {worst_err} (<= 1), {dt:.1f} s (limit 60 s)")


# ---------------------------------------------------------------- C5: bit exactness


def test_c5_end_to_end(natural, key64):
    cover = Image(natural)
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    failures = runs = 0
    for kind in ("IWT", "DRT"):
        for k in (1, 2, 4):
            for opap in (True, False):
                params = E.EmbedParams(k=k, V=4 if kind == "DRT" else None, use_opap=opap, transform=TransformParams(kind=kind))
                for _ in range(100):
                    msg = rng.integers(0, 256, int(rng.integers(1, 49)), dtype=np.uint8).tobytes()
                    stego, _ = E.embed(cover, msg, key64, params)
                    try:
                        failures += E.extract(stego, key64, params) != msg
                    except (cl.NoPayloadError, cl.IntegrityError):
                        failures += 1
                    runs += 1
    dt = time.perf_counter() - t0
    assert record(5, failures == 0 and dt < 300, f"embed/extract on 128x128: {failures}/{runs} failures over 12 configurations, {dt:.0f} s (limit 300 s)")


# ---------------------------------------------------------------- C6, C7: benchmark direction


def test_c6_opap_direction(bench_rows, images8, key512):
    bad_rows = [r for r in bench_rows if r["psnr_after_opap"] == "" or float(r["psnr_after_opap"]) < float(r["psnr_before_opap"])]
    psnrs = {}
    for name, cover in images8:
        msg = cli.payload_message(cover.height * cover.width // 16, 0)  # 0.5 bpp
        try:
            stego, _, params = cli.embed_at_payload(cover, msg, key512, E.EmbedParams(), "IWT")
            assert E.extract(stego, key512, params) == msg
            psnrs[name] = psnr(cover, stego)
        except E.CapacityError:
            psnrs[name] = -math.inf
    low = {n: round(v, 2) for n, v in psnrs.items() if v < 30}
    ok = not bad_rows and not low
    assert record(6, ok, f"after >= before OPAP on {len(bench_rows) - len(bad_rows)}/{len(bench_rows)} rows; 0.5 bpp PSNR min {min(psnrs.values()):.2f} dB over 8 images (>= 30), below floor: {low or 'none'}")


def test_c7_drt_vs_iwt(bench_rows):
    by = {}
    for r in bench_rows:
        by.setdefault(r["image"], {})[r["transform"]] = float(r["psnr_after_opap"]) if r["psnr_after_opap"] else -math.inf
    wins = sum(v["DRT"] >= v["IWT"] for v in by.values())
    detail = ", ".join(f"{n} {v['DRT']:.2f}/{v['IWT']:.2f}" for n, v in by.items())
    assert record(7, wins >= 7, f"DRT >= IWT at 1/32 bpp on {wins}/{len(by)} images (need 7); DRT/IWT dB: {detail}")


# ---------------------------------------------------------------- C8: detector


def test_c8_rs_sanity(images10):
    rng = np.random.default_rng(8)
    worst = 0.0
    raised = 0
    for _, img in images10:
        s = R.rs_statistics(img)
        worst = max(worst, abs(s.dR), abs(s.dS))
        noisy = Image((img.data & 254) | rng.integers(0, 2, img.data.shape).astype(np.uint8))
        raised += R.detect(noisy) > R.detect(img)
    ok = worst <= 0.05 and raised >= 8
    assert record(8, ok, f"clean max(|dR|,|dS|) = {worst:.4f} (<= 0.05); LSB randomization raised d on {raised}/10 (need 8)")


# ---------------------------------------------------------------- C9: shield


def test_c9_shield_contract(images10, tmp_path):
    t0 = time.perf_counter()
    key = tmp_path / "k"
    cli.main(["keygen", "--bits", "512", "--seed", "0", "--out", str(key)])
    msg = tmp_path / "m.bin"
    good, early = 0, 0
    worst = []
    for name, cover in images10:
        msg.write_bytes(cli.payload_message(cover.height * cover.width // 32, 0))  # 0.25 bpp
        c, s, sh, back = (tmp_path / f"{name}.{ext}" for ext in ("c.pgm", "s.pgm", "sh.pgm", "bin"))
        write_image_file(c, cover)
        if cli.main(["embed", "--cover", str(c), "--message", str(msg), "--key", f"{key}.pub", "--out", str(s)]):
            continue
        code = cli.main(["shield", "--stego", str(s), "--key", f"{key}.key", "--out", str(sh)])
        rep = json.loads(sh.with_name(sh.name + ".json").read_text())
        extracted = cli.main(["extract", "--stego", str(sh), "--key", f"{key}.key", "--out", str(back)]) == 0 and back.read_bytes() == msg.read_bytes()
        after = R.RsStats(rep["after"]["rm"], rep["after"]["sm"], rep["after"]["r_neg"], rep["after"]["s_neg"])
        rel = after.relative()[0]
        drop = psnr(cover, read_image_file(s)) - psnr(cover, read_image_file(sh))
        worst.append(rel)
        early += rep["blocks_adjusted"] == 0
        good += code == 0 and rel <= 0.05 and extracted and drop <= 2
    dt = time.perf_counter() - t0
    ok = good >= 8 and dt < 600
    assert record(9, ok, f"shield at 0.25 bpp: contract met on {good}/10 (need 8), max relative dR {max(worst):.4f}, {early}/10 already within 5% before shielding, {dt:.0f} s (limit 600 s)")


def test_c9_info_shield_under_stress():
    """Not a criterion line: shows the shield doing real work on a detectable image."""
    base = skimage.data.camera()[200:328, 200:328].copy()
    rng = np.random.default_rng(0)
    m = rng.random(base.shape) < 0.1
    base[m] = (base[m] & 254) | rng.integers(0, 2, m.sum()).astype(np.uint8)
    img = Image(base)
    res = R.shield(img, lambda _: True)
    print(f"INFO C9 stress: relative dR {res.before.relative()[0]:.3f} -> {res.after.relative()[0]:.3f}, {res.blocks_adjusted} blocks adjusted, success={res.success}")
    assert res.blocks_adjusted > 0


# ---------------------------------------------------------------- C10: GA


def fixed_points(g):
    return float(np.sum(np.asarray(g) == np.arange(1, 65)))


def test_c10_ga_properties():
    monotone, optimum = 0, 0
    finals = []
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        pop = [rng.permutation(64) + 1 for _ in range(32)]
        best, trace = evolve(pop, fixed_points, AgaParams(seed=seed))
        monotone += all(b >= a for a, b in zip(trace.best, trace.best[1:]))
        optimum += fixed_points(best) == 64
        finals.append(trace.best[-1])
    rng = np.random.default_rng(11)
    ref = np.arange(1, 65)
    valid = 0
    for _ in range(5000):
        a, b = rng.permutation(64) + 1, rng.permutation(64) + 1
        child = crossover_permutation(a, b, rng)
        mut = mutate(child, 0.5, rng, PERMUTATION)
        valid += np.array_equal(np.sort(child), ref) + np.array_equal(np.sort(mut), ref)
    ok = monotone == 100 and valid == 10_000 and optimum >= 95
    assert record(
        10,
        ok,
        f"GA: monotone best on {monotone}/100 runs; {valid}/10000 operator outputs valid; fixed-point optimum 64 reached in {optimum}/100 seeds within 100 generations (need 95; median best {np.median(finals):.0f})",
    )


# ---------------------------------------------------------------- C11: determinism


def test_c11_determinism(tmp_path, natural):
    src = tmp_path / "in"
    src.mkdir()
    write_image_file(src / "crop.pgm", Image(natural))
    (src / "msg.bin").write_bytes(b"determinism check payload")
    same = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        cmds = [
            ["keygen", "--bits", "64", "--seed", "4", "--out", d / "k"],
            ["embed", "--cover", src / "crop.pgm", "--message", src / "msg.bin", "--key", d / "k.pub", "--out", d / "s.pgm", "--seed", "4"],
            ["extract", "--stego", d / "s.pgm", "--key", d / "k.key", "--out", d / "m.bin", "--seed", "4"],
            ["analyze", "--image", d / "s.pgm", "--ref", src / "crop.pgm", "--out", d / "a.json", "--seed", "4"],
            ["shield", "--stego", d / "s.pgm", "--key", d / "k.key", "--out", d / "sh.pgm", "--seed", "4"],
            ["benchmark", "--images", src, "--payloads", "0.03125", "--out", d / "b.csv", "--no-timing", "--seed", "4"],
        ]
        for c in cmds:
            assert cli.main([str(x) for x in c]) in (cli.EXIT_OK, cli.EXIT_SHIELD)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [f for f in files if filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)]
    ok = len(same) == len(files)
    assert record(11, ok, f"6 commands run twice with seed 4: {len(same)}/{len(files)} output files byte-identical")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
