import pytest

from src.config import Config


def test_defaults_are_valid():
    Config.validate()


def test_invalid_default_is_reported(monkeypatch):
    monkeypatch.setattr(Config, 'CLIP_THRESHOLD', -1.0)
    with pytest.raises(AssertionError, match="клиппинга"):
        Config.validate()


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv('FS_THREADS', '3')
    assert Config.thread_cap() == 3
    monkeypatch.setenv('FS_THREADS', '0')
    assert Config.thread_cap() == 1
    monkeypatch.setenv('FS_THREADS', 'many')
    assert Config.thread_cap() == max(1, int(Config.MAX_CONCURRENT_THREADS))
