import csv
import json

import numpy as np
import pytest

from ripplestego import cli
from ripplestego.image_core import Image, read_image_file, write_image_file


@pytest.fixture()
def workspace(tmp_path, natural):
    write_image_file(tmp_path / "cover.pgm", Image(natural))
    (tmp_path / "msg.bin").write_bytes(b"clinical note 42")
    assert cli.main(["keygen", "--bits", "64", "--seed", "3", "--out", str(tmp_path / "k")]) == 0
    return tmp_path


def run(*args):
    return cli.main([str(a) for a in args])


def test_config_parsing():
    vals = cli.parse_config_text("k = 3  # three bits\n\ntransform = DRT\nuse_opap = false\nV = auto\n")
    assert vals == {"k": 3, "transform": "DRT", "use_opap": False, "V": None}
    with pytest.raises(cli.UsageError):
        cli.parse_config_text("colour = red")
    with pytest.raises(cli.UsageError):
        cli.parse_config_text("just words")


def test_build_config_defaults_and_limits():
    cfg = cli.build_config({})
    assert cfg.embed.kind == "IWT" and cfg.seed == 0 and cfg.embed.aga.max_generations == 40
    assert cli.build_config({"transform": "DRT", "k": 1, "V": 4}).embed.v == 4
    for bad in ({"transform": "DRT", "V": 8}, {"V": 32}, {"k": 0}, {"seed": "x"}, {"Th": 0.5}):
        with pytest.raises(cli.UsageError):
            cli.build_config(bad)


def test_embed_extract_round_trip(workspace):
    w = workspace
    assert run("embed", "--cover", w / "cover.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / "s.pgm") == 0
    report = json.loads((w / "s.pgm.json").read_text())
    assert report["payload_bits"] <= report["capacity_bits"]
    assert run("extract", "--stego", w / "s.pgm", "--key", w / "k.key", "--out", w / "back.bin") == 0
    assert (w / "back.bin").read_bytes() == b"clinical note 42"


def test_exit_codes(workspace):
    w = workspace
    assert run("extract", "--stego", w / "cover.pgm", "--key", w / "k.key", "--out", w / "x") == cli.EXIT_INTEGRITY
    (w / "big.bin").write_bytes(bytes(20000))
    assert run("embed", "--cover", w / "cover.pgm", "--message", w / "big.bin", "--key", w / "k.pub", "--out", w / "s.pgm") == cli.EXIT_CAPACITY
    assert run("embed", "--cover", w / "missing.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / "s.pgm") == cli.EXIT_USAGE
    assert run("embed", "--cover", w / "cover.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / "s.pgm", "--set", "bogus=1") == cli.EXIT_USAGE
    assert run("frobnicate") == cli.EXIT_USAGE


def test_embed_deterministic(workspace):
    w = workspace
    for name in ("a", "b"):
        assert run("embed", "--cover", w / "cover.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / f"{name}.pgm", "--seed", 5) == 0
    assert (w / "a.pgm").read_bytes() == (w / "b.pgm").read_bytes()


def test_analyze(workspace, capsys):
    w = workspace
    assert run("analyze", "--image", w / "cover.pgm", "--ref", w / "cover.pgm") == 0
    rep = json.loads(capsys.readouterr().out)
    assert {"rm", "sm", "r_neg", "s_neg", "dR", "dS", "d_statistic"} <= set(rep)
    assert len(rep["per_mask"]) == 10
    assert rep["psnr_db"] is None  # identical images: infinite PSNR is serialized as null


def test_analyze_constant_image(tmp_path, capsys):
    write_image_file(tmp_path / "flat.pgm", Image(np.full((32, 32), 90, np.uint8)))
    assert run("analyze", "--image", tmp_path / "flat.pgm") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["dR"] == 0 and rep["dS"] == 0 and rep["d_statistic"] == 0


def test_shield_command(workspace):
    w = workspace
    run("embed", "--cover", w / "cover.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / "s.pgm")
    code = run("shield", "--stego", w / "s.pgm", "--key", w / "k.key", "--out", w / "sh.pgm")
    report = json.loads((w / "sh.pgm.json").read_text())
    assert code in (cli.EXIT_OK, cli.EXIT_SHIELD)
    assert report["status"] == ("ok" if code == cli.EXIT_OK else "shield failed")
    assert run("extract", "--stego", w / "sh.pgm", "--key", w / "k.key", "--out", w / "back.bin") == 0
    assert (w / "back.bin").read_bytes() == b"clinical note 42"
    assert run("shield", "--stego", w / "cover.pgm", "--key", w / "k.key", "--out", w / "no.pgm") == cli.EXIT_INTEGRITY


def test_benchmark_csv(tmp_path, natural):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    write_image_file(imgs / "crop.pgm", Image(natural))
    outs = []
    for name in ("a.csv", "b.csv"):
        assert run("benchmark", "--images", imgs, "--payloads", "0.03125", "--out", tmp_path / name, "--no-timing", "--no-shield") == 0
        outs.append((tmp_path / name).read_text())
    assert outs[0] == outs[1]
    rows = list(csv.reader(outs[0].splitlines()))
    assert tuple(rows[0]) == cli.BENCH_COLUMNS and len(rows) == 3
    assert all(len(r) == 9 for r in rows)
    assert {r[1] for r in rows[1:]} == {"IWT", "DRT"}
    assert all(float(r[4]) >= float(r[3]) for r in rows[1:])
    assert run("benchmark", "--images", tmp_path / "nowhere", "--out", tmp_path / "c.csv") == cli.EXIT_USAGE


def test_bench_candidates_order():
    c = cli.bench_candidates("DRT")
    assert max(v for v, _ in c) == 4
    bits = [v * k for v, k in c]
    assert bits == sorted(bits)


def test_read_back_stego_is_8bit(workspace):
    w = workspace
    run("embed", "--cover", w / "cover.pgm", "--message", w / "msg.bin", "--key", w / "k.pub", "--out", w / "s.pgm")
    img = read_image_file(w / "s.pgm")
    assert img.data.dtype == np.uint8
