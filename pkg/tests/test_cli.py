import json

import pytest

from app.main import EXIT_ERROR, EXIT_OK, EXIT_REFUSED, main


@pytest.fixture
def run(tmp_path):
    def _run(*argv):
        return main(["--cache-dir", str(tmp_path / "cache"), "--log-level", "WARNING", *argv])

    return _run


def test_alphabet_count_only(run, capsys):
    assert run("alphabet", "--profile", "4,4,4,4", "--count-only") == EXIT_OK
    assert capsys.readouterr().out.strip() == "35357670"


def test_alphabet_dump(run, tmp_path):
    out = tmp_path / "letters.txt"
    assert run("alphabet", "--profile", "2,2,2,2", "--output", str(out)) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 1430
    assert lines[0] == "00000000"


def test_certify_and_verify(run, tmp_path, capsys):
    cert = tmp_path / "lower.json"
    assert run("certify", "lower", "-M", "2", "--profile", "1,1,1,1", "-p", "0.785", "--output", str(cert)) == EXIT_OK
    body = json.loads(cert.read_text())
    assert body["kind"] == "lower"
    assert body["config"]["run"]["p"] == 0.785
    capsys.readouterr()
    assert run("verify", str(cert)) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["valid"] is True


def test_tampered_certificate_is_rejected(run, tmp_path):
    cert = tmp_path / "lower.json"
    run("certify", "lower", "-M", "2", "-p", "0.785", "--output", str(cert))
    body = json.loads(cert.read_text())
    body["pi_upper"] = "1/1000"
    cert.write_text(json.dumps(body))
    assert run("verify", str(cert)) == EXIT_REFUSED


def test_refusal_exit_code(run, tmp_path):
    out = tmp_path / "refusal.json"
    assert run("certify", "lower", "-M", "2", "--profile", "1,1,1,1", "-p", "0.99", "--output", str(out)) == EXIT_REFUSED
    assert "reason" in json.loads(out.read_text())


def test_two_letter_upper_with_given_mass(run, capsys):
    assert run("certify", "upper", "-M", "3", "--two-letter", "-p", "0.984", "--x-max", "0.972") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["code"] == "strong_all_sides"


def test_given_max_mass_implies_two_letters(run, capsys):
    assert run("certify", "upper", "-M", "3", "-p", "0.984", "--x-max", "0.972") == EXIT_OK
    body = json.loads(capsys.readouterr().out)
    assert body["code"] == "strong_all_sides"
    assert body["config"]["two_letter"] is True
    assert len(body["letters"]) == 2


def test_given_max_mass_rejects_other_codes(run):
    assert run("certify", "upper", "-M", "3", "-p", "0.984", "--x-max", "0.972", "--code", "strong") == EXIT_ERROR


def test_site_constant_cannot_be_raised(run):
    assert run("certify", "lower", "-M", "2", "-p", "0.785", "--site-constant", "0.6") == EXIT_ERROR


def test_untileable_profile_is_an_error(run):
    assert run("certify", "lower", "-M", "2", "--profile", "1,2,1,1", "-p", "0.5") == EXIT_ERROR


def test_missing_certificate_is_an_error(run, tmp_path):
    assert run("verify", str(tmp_path / "nope.json")) == EXIT_ERROR


def test_curve(run, tmp_path):
    out = tmp_path / "curve.csv"
    assert run("curve", "-M", "2", "--p-list", "0.78,0.79", "--n-max", "20", "--output", str(out)) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "n,p,upset_mass_pi,mass_max,slack"
    assert len(lines) == 1 + 2 * 21


def test_simulate(run, tmp_path):
    out = tmp_path / "mc.csv"
    pbm = tmp_path / "k.pbm"
    assert run("simulate", "-M", "2", "-p", "0.8", "-n", "2", "--trials", "20", "--pbm", str(pbm), "--output", str(out)) == EXIT_OK
    assert out.read_text().splitlines()[0].startswith("M,p,n,trials")
    assert pbm.read_text().startswith("P1")


def test_baseline(run, capsys):
    assert run("baseline", "-M", "2", "--pc4-upper", "0.998") == EXIT_OK
    body = json.loads(capsys.readouterr().out)
    assert 0.7 < float(body["lower"]) < 0.71
    assert float(body["upper"]) > 0.999999


def test_log_file(run, tmp_path):
    log = tmp_path / "run.log"
    assert main(["--log-file", str(log), "--log-level", "INFO", "baseline", "-M", "3"]) == EXIT_OK
    assert log.exists()
