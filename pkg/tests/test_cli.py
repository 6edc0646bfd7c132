import io
import json

import jsonschema
import pytest
import yaml

from ztsim.cli import main, render_decision
from ztsim.engine import Decision
from ztsim.scenario import load_schema


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def demo2(scenarios_dir):
    return str(scenarios_dir / "demo2.yaml")


@pytest.fixture
def strict(scenarios_dir):
    return str(scenarios_dir / "demo2-strict-bar.yaml")


def test_validate_fixtures(scenarios_dir):
    for name in ("demo1.yaml", "demo2.yaml", "multicloud.yaml", "hardened"):
        assert cli("validate", str(scenarios_dir / name))[:2] == (0, "valid\n")


def test_validate_reports_dangling_selector(tmp_path, scenarios_dir):
    doc = yaml.safe_load((scenarios_dir / "demo2.yaml").read_text())
    doc["topology"]["clusters"][0]["namespaces"][0]["services"][0]["selector"] = {"app": "ghost"}
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(doc))
    code, out, _ = cli("validate", str(bad), "--output", "json")
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("violations"))
    assert code == 1 and not payload["valid"]
    assert [v["rule"] for v in payload["violations"]] == ["orphan-service"]
    assert payload["violations"][0]["path"] == "topology.clusters[0].namespaces[0].services[0].selector"


def test_unreadable_input_exits_2(tmp_path):
    assert cli("validate", str(tmp_path / "missing.yaml"))[0] == 2
    broken = tmp_path / "broken.yaml"
    broken.write_text("topology: [unclosed\n")
    code, _, err = cli("simulate", "--scenario", str(broken), "--request", "x")
    assert code == 2 and err.startswith("error:")


def test_simulate_inline_statuses(demo2, strict):
    code, out, _ = cli("simulate", "--scenario", demo2, "--from", "foo/sleep", "--to", "bar/httpbin", "--port", "8000")
    assert (code, out.splitlines()[0]) == (0, "200")
    code, out, _ = cli("simulate", "--scenario", demo2, "--scenario", strict, "--from", "legacy/sleep",
                       "--to", "bar/httpbin", "--port", "8000")
    assert (code, out.splitlines()[0]) == (1, "000")


def test_simulate_403(scenarios_dir):
    code, out, _ = cli("simulate", "--scenario", str(scenarios_dir / "hardened"), "--request", "web-to-orders-admin")
    assert (code, out.splitlines()[0]) == (1, "403")


def test_simulate_without_request_or_port(demo2):
    assert cli("simulate", "--scenario", demo2)[0] == 2
    assert cli("simulate", "--scenario", demo2, "--request", "nope")[0] == 2


def test_simulate_json_matches_table(demo2):
    args = ("simulate", "--scenario", demo2, "--request", "legacy-to-bar")
    _, table, _ = cli(*args)
    _, raw, _ = cli(*args, "--output", "json")
    payload = json.loads(raw)
    jsonschema.validate(payload, load_schema("decision"))
    assert render_decision(Decision.from_dict(payload)) == table


def test_now_flag_changes_certificate_validity(tmp_path, scenarios_dir):
    doc = yaml.safe_load((scenarios_dir / "demo2.yaml").read_text())
    doc["topology"]["clusters"][0]["namespaces"][0]["workloads"][1]["cert"] = {"issued_at": "2024-01-01T00:00:00Z"}
    path = tmp_path / "s.yaml"
    path.write_text(yaml.safe_dump(doc))
    base = ("simulate", "--scenario", str(path), "--scenario", str(scenarios_dir / "demo2-strict-bar.yaml"),
            "--request", "foo-to-bar")
    assert cli(*base)[0] == 0
    assert cli(*base, "--now", "2024-01-05T00:00:00Z")[0] == 1
    with pytest.raises(SystemExit) as exc:
        cli(*base, "--now", "2024-01-05T00:00:00")
    assert exc.value.code == 2


def test_matrix_table_and_json(demo2):
    code, out, _ = cli("matrix", "--scenario", demo2, "--port", "8000")
    lines = out.splitlines()
    assert code == 0 and lines[0].startswith("port 8000/HTTP")
    assert "200/mTLS" in out and "200/plain" in out
    assert len(lines) == 7
    code, raw, _ = cli("matrix", "--scenario", demo2, "--port", "8000", "--output", "json")
    payload = json.loads(raw)
    jsonschema.validate(payload, load_schema("matrix"))
    for line, row in zip(lines[1:], payload["cells"]):
        labels = line.split()[1:]
        channels = {"MTLS": "mTLS", "PLAINTEXT": "plain", "none": "-"}
        assert labels == [f"{c['status']}/{channels[c['channel']]}" for c in row]


def test_matrix_requires_port(demo2):
    with pytest.raises(SystemExit) as exc:
        cli("matrix", "--scenario", demo2)
    assert exc.value.code == 2


def test_lint_threshold(scenarios_dir, demo2):
    hardened = str(scenarios_dir / "hardened")
    assert cli("lint", "--scenario", hardened)[0] == 0
    assert cli("lint", "--scenario", hardened, "--threshold", "info")[0] == 1
    code, raw, _ = cli("lint", "--scenario", demo2, "--output", "json")
    payload = json.loads(raw)
    jsonschema.validate(payload, load_schema("lint"))
    assert code == 1 and payload["failed"] and payload["threshold"] == "warning"
    code, table, _ = cli("lint", "--scenario", demo2)
    assert table.splitlines()[-1] == f"{len(payload['findings'])} finding(s), {len(payload['findings'])} at or above warning"


def test_explain_round_trip(tmp_path, scenarios_dir):
    hardened = str(scenarios_dir / "hardened")
    for name, code in (("web-to-orders", 0), ("web-to-orders-admin", 1), ("orders-to-web", 1)):
        _, raw, _ = cli("simulate", "--scenario", hardened, "--request", name, "--output", "json")
        _, table, _ = cli("simulate", "--scenario", hardened, "--request", name)
        stored = tmp_path / f"{name}.json"
        stored.write_text(raw)
        assert cli("explain", str(stored)) == (code, table, "")
    bad = tmp_path / "bad.json"
    bad.write_text('{"verdict": "MAYBE"}')
    assert cli("explain", str(bad))[0] == 2


class Tty(io.StringIO):
    def isatty(self):
        return True


def test_color_only_on_tty_without_no_color(demo2, monkeypatch):
    argv = ["simulate", "--scenario", demo2, "--request", "foo-to-bar"]
    monkeypatch.delenv("NO_COLOR", raising=False)
    tty = Tty()
    main(argv, tty, io.StringIO())
    assert "\033[" in tty.getvalue()
    monkeypatch.setenv("NO_COLOR", "1")
    tty = Tty()
    main(argv, tty, io.StringIO())
    assert "\033[" not in tty.getvalue()
    assert "\033[" not in cli(*argv)[1]


def test_matrix_empty_policies_all_200_and_unexposed_port(demo2):
    code, raw, _ = cli("matrix", "--scenario", demo2, "--port", "8000", "--output", "json")
    assert {c["status"] for row in json.loads(raw)["cells"] for c in row} == {"200"}
    code, _, err = cli("matrix", "--scenario", demo2, "--port", "1234")
    assert code == 2 and "port-not-exposed" in err


def test_strict_bar_matrix_cells(demo2, strict):
    _, out, _ = cli("matrix", "--scenario", demo2, "--scenario", strict, "--port", "8000")
    rows = {line.split()[0]: line.split()[1:] for line in out.splitlines()[1:]}
    assert rows["demo/foo/sleep"][0] == "200/mTLS"
    assert rows["demo/legacy/sleep"][0] == "000/-"
