import csv
import re
import struct
import subprocess
import sys
import zlib

import numpy as np
import pytest

from cswm.cli import main, row_count_for
from cswm.evaluation import psnr, synthetic_patches
from cswm.pgm import read_pgm, write_pgm
from cswm.sensing import MatrixKind, OperatorDescriptor
from cswm.streamfile import original_file, read_stream, write_stream


@pytest.fixture
def work(tmp_path):
    (tmp_path / "key.bin").write_bytes(b"cli-test-key-material-01")
    (tmp_path / "other.bin").write_bytes(b"cli-test-key-material-02")
    return tmp_path


def sky(path, size=32, seed=0, pad=0):
    img = synthetic_patches(1, size, seed)[0]
    write_pgm(path, np.pad(img, pad))
    return img


def run(*args):
    return main([str(a) for a in args])


def test_row_count_for():
    assert row_count_for(40, 65536) == 26214
    assert row_count_for(100, 64) == 63
    assert row_count_for(50, 64) == 32
    for bad in (0, -5, 100.5):
        with pytest.raises(Exception):
            row_count_for(bad, 64)


def test_acquire_black_image_golden(work):
    write_pgm(work / "black.pgm", np.zeros((8, 8)))
    assert run("acquire", "--image", work / "black.pgm", "--rate", 50, "--seed", 0,
               "--out", work / "o.cswm") == 0
    expected = (b"CSWM" + struct.pack("<BBIIQBBHII", 1, 0, 64, 32, 0, 0, 0, 0, 0,
                                      zlib.crc32(bytes(64))) + bytes(64))
    assert (work / "o.cswm").read_bytes() == expected


def test_acquire_crops_and_matrix_choice(work, capsys):
    sky(work / "img.pgm", 16, pad=(3, 5))
    assert run("acquire", "--image", work / "img.pgm", "--rate", 100, "--matrix", "smatrix",
               "--out", work / "o.cswm") == 0
    sf = read_stream(work / "o.cswm")
    assert sf.order == 16 * 16 and sf.length == 255 and sf.matrix_kind == MatrixKind.SMATRIX
    assert sf.values.min() >= 0


def test_acquire_errors(work, capsys):
    sky(work / "img.pgm", 8)
    assert run("acquire", "--image", work / "img.pgm", "--rate", 0, "--out", work / "o") == 1
    (work / "bad.pgm").write_bytes(b"P7\n")
    assert run("acquire", "--image", work / "bad.pgm", "--rate", 40, "--out", work / "o") == 1
    assert "error:" in capsys.readouterr().err


def test_embed_toy_n16(work, capsys):
    y = np.random.default_rng(0).integers(-30, 30, 64)
    write_stream(work / "toy.cswm", original_file(y, OperatorDescriptor(0, 128, 64, 1)))
    assert run("embed", "--in", work / "toy.cswm", "--levels", 16, "--threshold", "loose",
               "--key", work / "key.bin", "--out", work / "m.cswm") == 0
    sf = read_stream(work / "m.cswm")
    assert sf.location_map.size == 32 and sf.tail_bits == 0


def test_embed_prints_rate_for_full_size(work, capsys):
    write_pgm(work / "big.pgm", synthetic_patches(1, 256, 4)[0])
    run("acquire", "--image", work / "big.pgm", "--rate", 40, "--out", work / "o.cswm")
    assert read_stream(work / "o.cswm").length == 26214
    capsys.readouterr()
    assert run("embed", "--in", work / "o.cswm", "--levels", 10, "--key", work / "key.bin",
               "--out", work / "m.cswm") == 0
    r = float(re.search(r"\br=([0-9.]+)", capsys.readouterr().out).group(1))
    assert abs(r - 1.2308) / 1.2308 < 0.01


def test_embed_threshold_guard(work, capsys):
    sky(work / "img.pgm", 32)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    assert run("embed", "--in", work / "o.cswm", "--levels", 13, "--threshold", 4,
               "--key", work / "key.bin", "--out", work / "m.cswm") == 1
    assert "T_max=3" in capsys.readouterr().err
    assert run("embed", "--in", work / "o.cswm", "--levels", 13, "--threshold", 3,
               "--key", work / "key.bin", "--out", work / "m.cswm") == 0
    # S=1024 makes T=512 loose: every measurement is eligible anyway
    assert run("embed", "--in", work / "o.cswm", "--levels", 13, "--threshold", 512,
               "--key", work / "key.bin", "--out", work / "m.cswm") == 0
    assert run("embed", "--in", work / "o.cswm", "--levels", 13, "--threshold", 4,
               "--allow-overflow", "--key", work / "key.bin", "--out", work / "m.cswm") == 0


def test_embed_needs_original_and_key(work, capsys):
    sky(work / "img.pgm", 8)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    run("embed", "--in", work / "o.cswm", "--levels", 7, "--key", work / "key.bin",
        "--out", work / "m.cswm")
    assert run("embed", "--in", work / "m.cswm", "--levels", 7, "--key", work / "key.bin",
               "--out", work / "x") == 1
    assert run("embed", "--in", work / "o.cswm", "--levels", 7, "--key", work / "missing",
               "--out", work / "x") == 1
    (work / "short.bin").write_bytes(b"abc")
    assert run("embed", "--in", work / "o.cswm", "--levels", 7, "--key", work / "short.bin",
               "--out", work / "x") == 1


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_extract_roundtrip_byte_identical(work, seed):
    sky(work / "img.pgm", 32, seed)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--seed", seed, "--out", work / "o.cswm")
    # L = 410; n = 8 consumes payloads in groups of three, leaving no tail for 410 = 3*136 + 2
    for n, T in ((8, "loose"), (16, "loose")):
        run("embed", "--in", work / "o.cswm", "--levels", n, "--threshold", T,
            "--key", work / "key.bin", "--out", work / "m.cswm")
        sf = read_stream(work / "m.cswm")
        code = run("extract", "--in", work / "m.cswm", "--key", work / "key.bin",
                   "--threshold", T, "--out", work / "b.cswm")
        if sf.tail_bits == 0:
            assert code == 0
            assert (work / "b.cswm").read_bytes() == (work / "o.cswm").read_bytes()
        else:
            assert code == 2


def test_extract_tight_threshold(work):
    sky(work / "img.pgm", 32, 7)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    run("embed", "--in", work / "o.cswm", "--levels", 8, "--threshold", 10,
        "--key", work / "key.bin", "--out", work / "m.cswm")
    assert run("extract", "--in", work / "m.cswm", "--key", work / "key.bin", "--threshold", 10,
               "--out", work / "b.cswm") in (0, 2)
    orig, back = read_stream(work / "o.cswm"), read_stream(work / "b.cswm")
    m = read_stream(work / "m.cswm")
    truncated = m.location_map[(16 * m.location_map.size - m.tail_bits) // 16:]
    keep = np.setdiff1d(np.arange(orig.length), truncated)
    assert np.array_equal(orig.values[keep], back.values[keep])
    assert m.values.size > 0 and np.abs(orig.values).max() > 10
    # a wrong threshold misreads the shifted values and is refused
    assert run("extract", "--in", work / "m.cswm", "--key", work / "key.bin", "--threshold", 5,
               "--out", work / "x.cswm") == 1


def test_extract_truncated_tail_flagged(work, capsys):
    y = np.array([300, -2, 7, 9, 11])
    write_stream(work / "t.cswm", original_file(y, OperatorDescriptor(0, 16, 5, 0)))
    run("embed", "--in", work / "t.cswm", "--levels", 7, "--key", work / "key.bin",
        "--out", work / "m.cswm")
    m = read_stream(work / "m.cswm")
    assert m.tail_bits > 0
    assert run("extract", "--in", work / "m.cswm", "--key", work / "key.bin",
               "--out", work / "b.cswm") == 2
    back = read_stream(work / "b.cswm").values
    diff = np.flatnonzero(back != y)
    assert set(diff) <= {int(m.location_map[-1])}
    assert "truncated" in capsys.readouterr().err


def test_extract_wrong_key(work, capsys):
    sky(work / "img.pgm", 16)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    run("embed", "--in", work / "o.cswm", "--levels", 10, "--key", work / "key.bin",
        "--out", work / "m.cswm")
    assert run("extract", "--in", work / "m.cswm", "--key", work / "other.bin",
               "--out", work / "b.cswm") == 1
    assert "checksum mismatch" in capsys.readouterr().err
    assert run("extract", "--in", work / "o.cswm", "--key", work / "key.bin",
               "--out", work / "b.cswm") == 1


def test_reconstruct_modes(work, capsys):
    sky(work / "img.pgm", 32, 11)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    run("embed", "--in", work / "o.cswm", "--levels", 16, "--key", work / "key.bin",
        "--out", work / "m.cswm")
    common = ("--iters", 200)
    assert run("reconstruct", "--in", work / "o.cswm", "--out", work / "ref.pgm", *common) == 0
    for mode in ("authorized", "unauthorized", "eca"):
        assert run("reconstruct", "--in", work / "m.cswm", "--mode", mode, "--key", work / "key.bin",
                   "--out", work / f"{mode}.pgm", "--trace", work / f"{mode}.csv", *common) == 0
    ref = read_pgm(work / "ref.pgm")
    scores = {m: psnr(ref, read_pgm(work / f"{m}.pgm")) for m in ("authorized", "unauthorized", "eca")}
    assert scores["authorized"] == 120.0
    assert scores["unauthorized"] < scores["authorized"]
    assert scores["eca"] > scores["unauthorized"]
    assert (work / "eca.csv").read_text().startswith("iter,objective,residual")


def test_reconstruct_mode_mismatch(work, capsys):
    sky(work / "img.pgm", 8)
    run("acquire", "--image", work / "img.pgm", "--rate", 40, "--out", work / "o.cswm")
    assert run("reconstruct", "--in", work / "o.cswm", "--mode", "eca", "--out", work / "x.pgm") == 1
    run("embed", "--in", work / "o.cswm", "--levels", 7, "--key", work / "key.bin",
        "--out", work / "m.cswm")
    assert run("reconstruct", "--in", work / "m.cswm", "--mode", "authorized",
               "--out", work / "x.pgm") == 1


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_analyze_capacity_and_rate(work, capsys):
    assert run("analyze", "--curves", "capacity", "rate", "--out-dir", work / "out") == 0
    cap = read_csv(work / "out" / "capacity.csv")
    at40 = [r for r in cap if int(r["L"]) == 26214]
    assert float(at40[0]["C_r"]) == pytest.approx(0.941, abs=1e-3)
    assert float(at40[-1]["C_r"]) == pytest.approx(7.467, abs=1e-3)
    for L in {r["L"] for r in cap}:
        rp = [float(r["R_p"]) for r in cap if r["L"] == L]
        assert len(rp) == 14 and all(a > b for a, b in zip(rp, rp[1:]))
    rate = read_csv(work / "out" / "rate.csv")
    assert float(rate[0]["r"]) == pytest.approx(1.882, abs=1e-3)
    assert float(rate[-1]["r"]) == pytest.approx(1.067, abs=1e-3)


def test_analyze_tmax_needs_sigma(work, capsys):
    assert run("analyze", "--curves", "capacity", "--threshold", "tmax", "--sigma", "3000",
               "--out-dir", work) == 0
    assert read_csv(work / "capacity.csv")[12]["T"] == "3"
    assert run("analyze", "--curves", "capacity", "--threshold", "tmax", "--out-dir", work) == 1
    assert run("analyze", "--curves", "rd", "--threshold", "tmax", "--out-dir", work) == 1


def test_analyze_sweeps(work, capsys):
    img = np.concatenate(synthetic_patches(2, 16, 3), axis=1)
    write_pgm(work / "sky.pgm", img)
    assert run("analyze", "--curves", "rd", "breakdown", "eca", "--image", work / "sky.pgm",
               "--patch", 16, "--n-min", 9, "--n-max", 10, "--iters", 30,
               "--out-dir", work / "o") == 0
    assert list(read_csv(work / "o" / "rd_curve.csv")[0]) == ["n", "C_r", "r", "psnr_median"]
    assert list(read_csv(work / "o" / "breakdown.csv")[0]) == ["n", "variant", "psnr_median"]
    eca = read_csv(work / "o" / "eca.csv")
    assert [r["n"] for r in eca] == ["9", "10"]
    assert run("analyze", "--curves", "rd", "--patches", 2, "--patch", 16, "--iters", 10,
               "--n-min", 10, "--n-max", 10, "--out-dir", work / "p") == 0
    assert run("analyze", "--curves", "rd", "--image", work / "sky.pgm", "--patch", 64,
               "--out-dir", work / "q") == 1


def test_console_script(work):
    out = subprocess.run([sys.executable, "-m", "cswm.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("acquire", "embed", "extract", "reconstruct", "analyze"):
        assert cmd in out.stdout
