import os

import numpy as np
import pytest

from sinkhornlab.cli import (
    Config,
    config_from_text,
    config_to_text,
    load_config,
    main,
    save_config,
)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_config_round_trip():
    cfg = Config(dims=(2, 5), epsilons=(0.01, 1.0, 10.0), n_values=(32, 64),
                 reps=3, seed=42, dist="normal", cost="l1", cube_side=2.0,
                 tolerance=1e-7, max_iterations=5000, overrelaxation=1.5, threads=4)
    assert config_from_text(config_to_text(cfg)) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        config_from_text("[grid]\ndims = 2\nwat = 3\n")
    with pytest.raises(ValueError):
        config_from_text("[nonsense]\na = 1\n")


def test_config_file_round_trip(tmp_path):
    cfg = Config(dims=(3,), epsilons=(0.25,), n_values=(8, 16), reps=2)
    path = tmp_path / "run.cfg"
    save_config(cfg, str(path))
    assert load_config(str(path)) == cfg


BENCH_ARGS = ["bench", "--dims", "1", "--epsilons", "1", "--n", "8,16",
              "--reps", "2", "--seed", "7"]


def test_bench_is_reproducible(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert main(BENCH_ARGS + ["--out-dir", str(d1)]) == 0
    assert main(BENCH_ARGS + ["--out-dir", str(d2)]) == 0
    assert read(d1 / "results.csv") == read(d2 / "results.csv")
    assert read(d1 / "slopes.csv") == read(d2 / "slopes.csv")


def test_bench_header_and_newlines(tmp_path):
    assert main(BENCH_ARGS + ["--out-dir", str(tmp_path)]) == 0
    raw = read(tmp_path / "results.csv")
    assert raw.split(b"\n")[0] == b"d,epsilon,n,rep,value,seed,iterations,converged"
    assert b"\r" not in raw


def test_bench_thread_invariance(tmp_path):
    d1, d2 = tmp_path / "t1", tmp_path / "t4"
    assert main(BENCH_ARGS + ["--threads", "1", "--out-dir", str(d1)]) == 0
    assert main(BENCH_ARGS + ["--threads", "4", "--out-dir", str(d2)]) == 0
    assert read(d1 / "results.csv") == read(d2 / "results.csv")


def test_bench_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SINKHORN_LAB_THREADS", "2")
    d1 = tmp_path / "env"
    assert main(BENCH_ARGS + ["--out-dir", str(d1)]) == 0
    d2 = tmp_path / "flag"
    monkeypatch.delenv("SINKHORN_LAB_THREADS")
    assert main(BENCH_ARGS + ["--out-dir", str(d2)]) == 0
    assert read(d1 / "results.csv") == read(d2 / "results.csv")


def test_bench_seed_changes_output(tmp_path):
    d1, d2 = tmp_path / "s7", tmp_path / "s8"
    assert main(BENCH_ARGS + ["--out-dir", str(d1)]) == 0
    args = [a if a != "7" else "8" for a in BENCH_ARGS]
    assert main(args + ["--out-dir", str(d2)]) == 0
    assert read(d1 / "results.csv") != read(d2 / "results.csv")


def test_bench_normal_distribution_omits_theory_column(tmp_path, capsys):
    args = ["bench", "--dims", "1", "--epsilons", "1", "--n", "8,16,32",
            "--reps", "2", "--seed", "1", "--dist", "normal",
            "--cost", "sqeuclidean", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    err = capsys.readouterr().err
    assert "omitted" in err
    slopes = read(tmp_path / "slopes.csv").decode()
    assert "theory_rate_constant" not in slopes
    uniform_dir = tmp_path / "u"
    assert main(BENCH_ARGS + ["--out-dir", str(uniform_dir)]) == 0
    assert "theory_rate_constant" in read(uniform_dir / "slopes.csv").decode()


def test_bench_config_file_with_flag_override(tmp_path):
    cfg = Config(dims=(1,), epsilons=(1.0,), n_values=(8, 16), reps=2, seed=7)
    path = tmp_path / "bench.cfg"
    save_config(cfg, str(path))
    d1, d2 = tmp_path / "cfg", tmp_path / "flags"
    assert main(["bench", "--config", str(path), "--out-dir", str(d1)]) == 0
    assert main(BENCH_ARGS + ["--out-dir", str(d2)]) == 0
    assert read(d1 / "results.csv") == read(d2 / "results.csv")
    # flags win over the file
    d3 = tmp_path / "win"
    assert main(["bench", "--config", str(path), "--seed", "9", "--out-dir", str(d3)]) == 0
    assert read(d3 / "results.csv") != read(d1 / "results.csv")


def test_usage_errors_exit_one(tmp_path):
    assert main(["bench", "--dims", "zzz", "--out-dir", str(tmp_path)]) == 1
    assert main(["nonsense"]) == 1
    assert main(["bench", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_theorem1_command(tmp_path, capsys):
    rc = main(["theorem1", "--dims", "2", "--epsilons", "0.1,0.5", "--n", "8",
               "--instances", "2", "--seed", "3", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out and "FAIL" not in out
    head = read(tmp_path / "theorem1.csv").split(b"\n")[0]
    assert head == b"d,epsilon,n,instance,W,W_eps,gap,bound,pass"


def test_potentials_command(tmp_path, capsys):
    rc = main(["potentials", "--atoms", "10", "--epsilons", "0.05,0.1,100.0",
               "--nodes", "256", "--seed", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "H^2 norm" in out
    assert (tmp_path / "potentials.csv").exists()
    assert main(["potentials", "--dim", "2", "--out-dir", str(tmp_path)]) == 1


def test_kernel_sgd_command(tmp_path, capsys):
    rc = main(["kernel-sgd", "--n", "8", "--eps", "0.5", "--iterations", "4000",
               "--runs", "1", "--seed", "5", "--out-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "rel gap" in out
    trace = read(tmp_path / "kernel_sgd_trace.csv").decode()
    assert trace.startswith("run,iteration,objective\n")
