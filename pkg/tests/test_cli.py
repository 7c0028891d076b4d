import pytest

from harq_csi.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    HEADER,
    ExperimentConfig,
    load_config,
    main,
    parse_grid,
    run,
    validate,
)


def levels(findings):
    return sorted(f.level for f in findings)


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == HEADER
    return [dict(zip(HEADER.split(","), ln.split(","))) for ln in lines[1:]]


def test_parse_grid():
    assert parse_grid("-25:25:5") == tuple(float(x) for x in range(-25, 26, 5))
    assert parse_grid("1, 2,3") == (1.0, 2.0, 3.0)
    assert parse_grid("") == ()
    with pytest.raises(ValueError):
        parse_grid("0:1:0")


def test_load_config_with_comments_and_overrides(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("# example\ncase = harq-new\nkind = INR  # protocol\nM = 3\nsnr_grid = 0,5\n")
    c = load_config(cfg, {"F": "4", "mc": "100"})
    assert (c.case, c.kind, c.M, c.F, c.mc_renewals) == ("harq-new", "inr", 3, 4, 100)
    assert c.snr_db_grid == (0.0, 5.0)
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        load_config(bad)


def test_validate_findings():
    rule = validate(ExperimentConfig(case="harq-new", kind="alo", M=2, F=1))
    assert levels(rule) == ["error"]
    assert "at least 1 bit is needed for ack/nack" in rule[0].message
    assert levels(validate(ExperimentConfig(case="harq-new", kind="inr", M=4, F=2))) == ["unsupported"]
    assert validate(ExperimentConfig(case="harq-new", kind="inr", M=4, F=2, mc_renewals=1000)) == []
    assert validate(ExperimentConfig(case="harq-new", kind="alo", M=4, F=2)) == []
    assert levels(validate(ExperimentConfig(case="harq-new", kind="rtd", M=1, F=2))) == ["note"]
    assert levels(validate(ExperimentConfig(case="dp-full-csi", kind="rtd", M=4))) == ["unsupported"]
    assert levels(validate(ExperimentConfig(case="harq-classical", kind="rtd", M=2, F=3))) == ["error"]
    assert "error" in levels(validate(ExperimentConfig(case="outage-partial", F=1)))
    assert levels(validate(ExperimentConfig(case="harq-new"))) == ["error"]
    assert levels(validate(ExperimentConfig(case="nonsense"))) == ["error"]
    assert validate(ExperimentConfig(case="ergodic-full")) == []


def test_validate_exit_codes(capsys):
    assert main(["validate", "--case", "harq-new", "--kind", "alo", "--M", "2", "--F", "1"]) == EXIT_CONFIG
    assert main(["validate", "--case", "harq-new", "--kind", "inr", "--M", "5"]) == EXIT_UNSUPPORTED
    assert main(["validate", "--case", "harq-new", "--kind", "inr", "--M", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ack/nack" in out and "--mc" in out


def test_run_refuses_bad_config(tmp_path, capsys):
    c = ExperimentConfig(case="harq-new", kind="rtd", M=3, F=1, output_path=str(tmp_path / "x.csv"))
    assert run(c) == EXIT_CONFIG
    assert not (tmp_path / "x.csv").exists()


def test_ergodic_full_grid(tmp_path):
    out = tmp_path / "wf.csv"
    assert main(["run", "--case", "ergodic-full", "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert len(rows) == 11
    assert [float(r["snr_db"]) for r in rows] == list(range(-25, 26, 5))
    for r in rows:
        assert float(r["ratio_full_csi"]) == 1.0
        assert r["p_out"] == "" and r["mean_renewal"] == ""
        assert float(r["eta_bits"]) == pytest.approx(float(r["eta_nats"]) / 0.6931471805599453)
    meta = (tmp_path / "wf.csv.meta").read_text()
    assert "case = ergodic-full" in meta and "tool_version" in meta


def test_outage_partial_low_snr(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["run", "--case", "outage-partial", "--F", "2", "--snr-grid=-25", "--out", str(out)]) == EXIT_OK
    (row,) = read_rows(out)
    assert float(row["ratio_full_csi"]) == pytest.approx(0.81, abs=0.01)
    assert row["mean_renewal"] == "1"


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "--case", "harq-new", "--kind", "alo", "--M", "2", "--F", "2", "--snr-grid=-10,0",
            "--mc", "20000", "--seed", "5"]
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rows = read_rows(a)
    for r in rows:
        assert abs(float(r["mc_eta"]) - float(r["eta_nats"])) <= 5 * float(r["mc_se"])


@pytest.mark.slow
def test_inr_two_slots_at_five_db(tmp_path):
    out = tmp_path / "inr.csv"
    assert main(["run", "--case", "harq-new", "--kind", "inr", "--M", "2", "--F", "2", "--snr-grid=5",
                 "--out", str(out)]) == EXIT_OK
    (row,) = read_rows(out)
    assert float(row["ratio_full_csi"]) == pytest.approx(0.67, abs=0.03)
