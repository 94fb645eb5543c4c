# core/sim_logging.py
from __future__ import annotations
import json, os, io
from pathlib import Path
from datetime import datetime, timezone
from typing import Any, Dict, Optional

# Папка ~/.fairshare/logs (или FAIRSHARE_LOG_DIR)
def _logs_dir() -> Path:
    override = os.environ.get("FAIRSHARE_LOG_DIR")
    base = Path(override) if override else Path(os.path.expanduser("~")) / ".fairshare" / "logs"
    return base

def logging_enabled() -> bool:
    return os.environ.get("FAIRSHARE_LOG", "1").strip().lower() not in ("0", "false", "no", "off")

def now_utc_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

def _plain(obj: Any) -> Any:
    # numpy-скаляры и прочее приводим к обычным типам, чтобы json не падал
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        try:
            return obj.item()
        except Exception:
            return repr(obj)
    return obj

class JsonlLogger:
    """Запись событий симуляции в logs/YYYY-MM-DD.jsonl."""
    def __init__(self, dirpath: Optional[Path] = None):
        self._dir = dirpath

    @property
    def dir(self) -> Path:
        return self._dir or _logs_dir()

    def write(self, event: Dict[str, Any]) -> None:
        if not logging_enabled():
            return
        event = dict(event)
        event.setdefault("ts", now_utc_iso())
        date = event["ts"][:10]  # YYYY-MM-DD
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            path = self.dir / f"{date}.jsonl"
            with io.open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(_plain(event), ensure_ascii=False) + "\n")
        except OSError:
            # лог не должен валить прогон
            pass

# Удобный синглтон
logger = JsonlLogger()
