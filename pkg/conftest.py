# conftest.py
import pytest


@pytest.fixture(autouse=True)
def _quiet_logs(monkeypatch, tmp_path):
    # jsonl-лог в тестах не пишем; если кто-то включит, то только во временную папку
    monkeypatch.setenv("FAIRSHARE_LOG", "0")
    monkeypatch.setenv("FAIRSHARE_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.delenv("FAIRSHARE_SEED", raising=False)
