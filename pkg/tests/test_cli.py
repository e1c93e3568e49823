import json
import subprocess
import sys

import pytest

from mango_curate.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run
from mango_curate.ingest import iter_jsonl, read_metadata, read_raster


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_regions": 12, "tile_size": 32, "n_dates": 3, "countries": ["AAA", "BBB", "CCC", "DDD"], "seed": 4}))
    assert run(["synth", "--spec", str(spec), "--out", str(root / "data")]) == EXIT_OK
    return root / "data"


def _rows(path):
    return [obj for _, obj in iter_jsonl(path)]


def test_stats_on_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run(["stats", "--in", str(empty)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["total"] == 0 and set(summary["by_category"].values()) == {0}


def test_missing_required_flag(capsys):
    assert run(["filter", "--out", "x.jsonl"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand():
    assert run(["frobnicate"]) == EXIT_USAGE


def test_missing_seed_in_pipeline_mode(tmp_path):
    assert run(["pipeline", "--manifest", "m.jsonl", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert run(["filter", "--manifest", str(bad), "--out", str(tmp_path / "o.jsonl")]) == EXIT_DATA
    assert "bad.jsonl:1" in capsys.readouterr().err


def test_missing_input_file(tmp_path):
    assert run(["stats", "--in", str(tmp_path / "nope.jsonl")]) == EXIT_DATA


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"filter": {"kappa": 2.0}}))
    assert run(["stats", "--in", "x", "--config", str(cfg)]) == EXIT_USAGE


def test_filter_summary_and_provenance(corpus, tmp_path, capsys):
    out = tmp_path / "f.jsonl"
    assert run(["filter", "--manifest", str(corpus / "manifest.jsonl"), "--out", str(out),
                "--summary", str(tmp_path / "s.json")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    # one over-clouded candidate per region is dropped
    assert summary["candidates_dropped"] == 12 and summary["candidates_kept"] == 36
    header = read_metadata(out)
    assert header["_provenance"]["command"] == "filter"
    assert len(header["_provenance"]["config_hash"]) == 64
    assert "_provenance" in json.loads((tmp_path / "s.json").read_text())
    # paths in the filtered manifest resolve from its own directory
    first = _rows(out)[0]
    assert (tmp_path / first["image_path"]).resolve().exists()


def test_kappa_override(corpus, tmp_path, capsys):
    out = tmp_path / "f.jsonl"
    assert run(["filter", "--manifest", str(corpus / "manifest.jsonl"), "--out", str(out), "--kappa", "0.5"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["candidates_dropped"] == 0


def test_pipeline_recovers_planted_dates(corpus, tmp_path):
    out = tmp_path / "run"
    rc = run(["pipeline", "--manifest", str(corpus / "manifest.jsonl"), "--out-dir", str(out), "--seed", "1",
              "--dump-detections", str(tmp_path / "maps"), "--workers", "1"])
    assert rc == EXIT_OK
    truth = json.loads((corpus / "truth.json").read_text())
    report = _rows(out / "report.jsonl")
    assert len(report) == 12
    planted = {rid: t["planted_date"] for rid, t in truth.items() if t["planted_date"]}
    assert planted
    for row in report:
        if row["region_id"] in planted:
            assert row["chosen_date"] == planted[row["region_id"]], row["region_id"]
            assert row["selection_rule"] == "ArgmaxJ"
        else:
            assert row["selection_rule"] == "CloudMin"
    for name in ("filtered.jsonl", "report.jsonl", "strat.jsonl", "splits.jsonl"):
        assert "_provenance" in read_metadata(out / name)
    assert "_provenance" in json.loads((out / "stats.json").read_text())
    maps = sorted((tmp_path / "maps").glob("*.msr"))
    n_positive_candidates = 3 * len(planted)
    assert len(maps) == n_positive_candidates
    assert read_raster(maps[0]).shape == (32, 32, 1)


def test_pipeline_is_worker_count_invariant(corpus, tmp_path):
    outs = []
    for w in ("1", "3"):
        d = tmp_path / f"w{w}"
        assert run(["pipeline", "--manifest", str(corpus / "manifest.jsonl"), "--out-dir", str(d),
                    "--seed", "2", "--workers", w]) == EXIT_OK
        outs.append(d)
    for name in ("filtered.jsonl", "report.jsonl", "strat.jsonl", "splits.jsonl", "stats.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_stepwise_commands_and_splits(corpus, tmp_path):
    m = str(corpus / "manifest.jsonl")
    f, r, s, sp = (str(tmp_path / n) for n in ("f.jsonl", "r.jsonl", "s.jsonl", "sp.jsonl"))
    assert run(["filter", "--manifest", m, "--out", f]) == EXIT_OK
    assert run(["select", "--manifest", f, "--out", r, "--method", "mvi"]) == EXIT_OK
    assert all(row["method"] == "mvi" for row in _rows(r))
    assert run(["stratify", "--in", r, "--out", s, "--seed", "0"]) == EXIT_OK
    assert run(["split", "--in", s, "--out", sp, "--seed", "0"]) == EXIT_OK
    rows = _rows(sp)
    by_country = {}
    for row in rows:
        by_country.setdefault(row["country_iso3"], set()).add(row["split"])
    assert all(len(v) == 1 for v in by_country.values())
    pos = sum(row["category"] != "PureNegative" for row in rows)
    assert abs(pos - (len(rows) - pos)) <= 1


def test_failed_region_does_not_abort_batch(corpus, tmp_path):
    lines = (corpus / "manifest.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    rec["region_id"] = "ZZZ-broken"
    rec["mask_path"] = "masks/does-not-exist.msr"
    # beside the corpus so relative paths stay valid
    manifest = corpus / "with_broken.jsonl"
    manifest.write_text("\n".join(lines + [json.dumps(rec)]) + "\n")
    out = tmp_path / "r.jsonl"
    try:
        assert run(["select", "--manifest", str(manifest), "--out", str(out)]) == EXIT_OK
    finally:
        manifest.unlink()
    trailer = json.loads(out.read_text().splitlines()[-1])
    assert [f["region_id"] for f in trailer["_failures"]] == ["ZZZ-broken"]
    assert len(_rows(out)) == 12


def test_config_file_with_flag_override(corpus, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"filter": {"kappa": 0.5}}))
    out = tmp_path / "f.jsonl"
    assert run(["filter", "--manifest", str(corpus / "manifest.jsonl"), "--out", str(out), "--config", str(cfg)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["candidates_dropped"] == 0
    assert run(["filter", "--manifest", str(corpus / "manifest.jsonl"), "--out", str(out), "--config", str(cfg),
                "--kappa", "0.05"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["candidates_dropped"] == 12


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mango_curate", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
