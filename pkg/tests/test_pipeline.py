import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from loclab.cache import Cache, CacheCorrupt, CacheEntry, config_hash, decode, encode
from loclab.cli import main
from loclab.config import PAPER_LAMBDAS, ConfigError, ExperimentConfig, load_config
from loclab.pipeline import STAGES, MissingStage, run_stage

SMOKE = Path(__file__).parent / "data" / "smoke.ini"


# -- cache format ---------------------------------------------------------------

def test_cache_round_trip(tmp_path):
    e = CacheEntry("spectrum", "abc123", {"levels": np.array([1.0, 2.5]), "m": np.arange(6.0).reshape(2, 3)},
                   {"lambda": 0.15, "parity": "odd"})
    d = decode(encode(e))
    assert d.kind == "spectrum" and d.config_hash == "abc123" and d.meta == e.meta
    np.testing.assert_array_equal(d.arrays["m"], e.arrays["m"])
    c = Cache(tmp_path)
    p = c.store(e, "lam0.1500")
    assert p.name == "spectrum--lam0.1500--abc123.lcache"
    assert oct(p.stat().st_mode & 0o777) == "0o644"
    np.testing.assert_array_equal(c.load("spectrum", "lam0.1500", "abc123").arrays["levels"], [1.0, 2.5])


def test_cache_header_is_plain_text():
    raw = encode(CacheEntry("fit", "h", {"result": np.array([0.5])}))
    head = raw.split(b"\nend\n")[0].decode()
    lines = head.splitlines()
    assert lines[0] == "loclab-cache 1"
    assert "endian = little" in lines and "dtype = float64" in lines
    assert "array result 1 1" in lines
    assert raw.endswith(np.array([0.5], dtype="<f8").tobytes())


def test_payload_corruption_detected(tmp_path):
    c = Cache(tmp_path)
    p = c.store(CacheEntry("rho", "h1", {"rho": np.array([0.17, 0.01])}), "x")
    data = bytearray(p.read_bytes())
    data[-3] ^= 0x40
    p.write_bytes(bytes(data))
    with pytest.raises(CacheCorrupt, match="hash"):
        c.load("rho", "x", "h1")


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b.replace(b"loclab-cache 1", b"loclab-cache 9"), "magic"),
    (lambda b: b.replace(b"\nend\n", b"\nfin\n"), "terminator"),
    (lambda b: b.replace(b"endian = little", b"endian = big"), "encoding"),
])
def test_header_damage_detected(mutate, msg):
    raw = encode(CacheEntry("rho", "h", {"rho": np.array([1.0])}))
    with pytest.raises(CacheCorrupt, match=msg):
        decode(mutate(raw))


def test_address_mismatch_and_stale_pruning(tmp_path):
    c = Cache(tmp_path)
    c.store(CacheEntry("fit", "old", {"r": np.zeros(1)}), "lam0.2000")
    c.store(CacheEntry("fit", "new", {"r": np.ones(1)}), "lam0.2000")
    assert not c.exists("fit", "lam0.2000", "old")
    assert c.exists("fit", "lam0.2000", "new")
    os.replace(c.path("fit", "lam0.2000", "new"), c.path("fit", "lam0.2000", "other"))
    with pytest.raises(CacheCorrupt, match="address"):
        c.load("fit", "lam0.2000", "other")
    assert not list(tmp_path.glob(".tmp-*"))


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [0.1, 2]}) == config_hash({"b": [0.1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_unknown_cache_kind():
    with pytest.raises(ValueError):
        CacheEntry("wavefunction", "h")


# -- configuration -----------------------------------------------------------------

def test_default_config():
    cfg = ExperimentConfig()
    assert cfg.lambdas == PAPER_LAMBDAS and len(PAPER_LAMBDAS) == 15
    assert cfg.windows == ((95.0, 105.0), (195.0, 205.0))
    assert cfg.all_lambdas[-1] == 0.25


def test_ini_round_trip(tmp_path):
    cfg = ExperimentConfig(lambdas=(0.15, 0.2), k_centers=(60.0,), n_husimi=40)
    p = tmp_path / "c.ini"
    p.write_text(cfg.to_ini())
    assert load_config(p) == cfg


@pytest.mark.parametrize("text, msg", [
    ("[experiment]\nbogus = 1\n", "unknown key"),
    ("[experiment]\nparity = odd\n", "belongs in section"),
    ("[spectrum]\nparity = both\n", "parity"),
    ("[experiment]\nlambdas = 0.6\n", "outside"),
    ("[classical]\nrho_samples = 10\n", "at least"),
    ("[experiment]\nwindow_width = x\n", "cannot parse"),
])
def test_config_errors(tmp_path, text, msg):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.ini")


# -- staged runs -------------------------------------------------------------------

def _run_all(cache_dir):
    cfg = load_config(SMOKE, cache_dir=str(cache_dir))
    results = {st: run_stage(cfg, st) for st in STAGES}
    return cfg, results


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    with pytest.warns(RuntimeWarning, match="A_max calibrated"):
        cfg, results = _run_all(root / "cache")
    return cfg, results, root


def test_stages_produce_entries(smoke_run):
    cfg, results, _ = smoke_run
    root = Path(cfg.cache_dir)
    for kind in ("chaos_grid", "rho", "transport", "spectrum", "husimi_set", "separation", "measures", "fit"):
        assert list(root.glob(f"{kind}--*.lcache")), kind
    for st in STAGES[:-1]:
        assert all(not r.cached for r in results[st])


def test_transport_order_of_magnitude_for_lambda_025(smoke_run):
    cfg, _, _ = smoke_run
    c = Cache(cfg.cache_dir)
    (p,) = Path(cfg.cache_dir).glob("transport--lam0.2500--*.lcache")
    e = decode(p.read_bytes())
    assert 100 / 3 <= e.meta["N_T"] <= 300
    assert c.exists("transport", "lam0.2500", e.config_hash)


def test_rerun_is_a_cache_hit(smoke_run):
    cfg, _, _ = smoke_run
    before = {p.name: p.stat().st_mtime_ns for p in Path(cfg.cache_dir).glob("*.lcache")}
    for st in STAGES[:-1]:
        assert all(r.cached for r in run_stage(cfg, st))
    after = {p.name: p.stat().st_mtime_ns for p in Path(cfg.cache_dir).glob("*.lcache")}
    assert before == after


def test_provenance_records(smoke_run):
    cfg, _, _ = smoke_run
    recs = [json.loads(line) for line in open(Path(cfg.cache_dir) / "provenance.jsonl")]
    assert {r["stage"] for r in recs} >= set(STAGES[:-1])
    assert all({"config_hash", "wall_time", "seed"} <= set(r) for r in recs)


def test_report_files(smoke_run):
    cfg, results, _ = smoke_run
    names = sorted(Path(p).name for p in results["report"])
    assert names == ["a_vs_c.csv", "beta_vs_a.csv", "ps_fit.csv"]
    rows = Path(cfg.cache_dir, "report", "beta_vs_a.csv").read_text().splitlines()
    assert rows[0] == "lambda,k,A_rescaled,beta,status"
    assert len(rows) == 2 and rows[1].endswith(",ok")
    ps = Path(cfg.cache_dir, "report", "ps_fit.csv").read_text().splitlines()
    assert ps[0] == "S,P_emp,P_BRB" and len(ps) == 1 + cfg.n_bins


def test_report_is_byte_identical_on_fresh_rerun(smoke_run, tmp_path):
    cfg, results, _ = smoke_run
    with pytest.warns(RuntimeWarning):
        cfg2, results2 = _run_all(tmp_path / "cache")
    for a, b in zip(results["report"], results2["report"]):
        assert Path(a).read_bytes() == Path(b).read_bytes()


def test_report_flags_missing_rows(smoke_run, tmp_path):
    cfg, _, _ = smoke_run
    other = cfg.replace(k_centers=(40.0, 60.0))
    paths = run_stage(other, "report", out_dir=tmp_path)
    rows = Path(paths[0]).read_text().splitlines()
    assert rows[1].endswith(",ok")
    assert rows[2].endswith(",missing:measures")


def test_missing_upstream_stage(smoke_run, tmp_path):
    cfg, _, _ = smoke_run
    for p in Path(cfg.cache_dir).glob("*--lam0.2500--*.lcache"):
        if p.name.split("--")[0] in ("chaos_grid", "rho", "transport"):
            shutil.copy(p, tmp_path / p.name)
    partial = cfg.replace(cache_dir=str(tmp_path))
    with pytest.raises(MissingStage, match="spectrum stage required"):
        run_stage(partial, "fit")
    with pytest.raises(MissingStage, match="husimi stage required"):
        run_stage(partial, "separate")


# -- command line -------------------------------------------------------------------

def test_cli_exit_codes(smoke_run, tmp_path, capsys):
    cfg, _, _ = smoke_run
    assert main(["fit", "--config", str(SMOKE), "--cache-dir", str(tmp_path / "empty")]) == 3
    assert "stage required" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nnonsense = 3\n")
    assert main(["classical", "--config", str(bad)]) == 2
    assert main(["spectrum", "--config", str(SMOKE), "--k-lo", "30"]) == 2
    with pytest.raises(SystemExit) as ex:
        main(["frobnicate"])
    assert ex.value.code == 2
    assert main(["fit", "--config", str(SMOKE), "--cache-dir", cfg.cache_dir]) == 0
    assert "cached" in capsys.readouterr().out


def test_cli_numerical_failure_on_corrupt_cache(smoke_run, tmp_path):
    cfg, _, _ = smoke_run
    dst = tmp_path / "c"
    shutil.copytree(cfg.cache_dir, dst)
    (p,) = dst.glob("measures--*.lcache")
    data = bytearray(p.read_bytes())
    data[-1] ^= 0x01
    p.write_bytes(bytes(data))
    assert main(["report", "--config", str(SMOKE), "--cache-dir", str(dst), "--out", str(tmp_path / "r")]) == 4


def test_cli_module_entry_point(smoke_run):
    cfg, _, _ = smoke_run
    out = subprocess.run([sys.executable, "-m", "loclab", "classical", "--config", str(SMOKE),
                          "--cache-dir", cfg.cache_dir], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip() == "classical\tlam0.2500\tcached"
