import pytest

from geopulse.configio import atomic_write_text, format_kv, parse_kv, read_kv, write_kv


def test_parse_skips_comments_and_blank_lines():
    text = "# preset\n\na1 = 0.5  # slope\nname=S\n"
    assert parse_kv(text) == {"a1": "0.5", "name": "S"}


def test_parse_rejects_bad_lines():
    with pytest.raises(ValueError, match="line 2"):
        parse_kv("a = 1\nnonsense\n")


def test_round_trip(tmp_path):
    data = {"b": "2.5", "a": "x y"}
    path = tmp_path / "c.cfg"
    write_kv(path, data)
    assert read_kv(path) == data
    assert path.read_text() == format_kv(data)


def test_atomic_write_replaces_existing(tmp_path):
    path = tmp_path / "out.txt"
    path.write_text("old")
    atomic_write_text(path, "new\n")
    assert path.read_text() == "new\n"
    assert len(list(tmp_path.iterdir())) == 1
