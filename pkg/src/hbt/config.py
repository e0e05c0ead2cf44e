"""Flat key=value run configuration shared by the CLI commands.

One `key = value` pair per line, `#` starts a comment. Commands consume keys
through the typed getters; anything left over is rejected so typos fail loudly,
and the fully-resolved values (defaults included) are available for logging.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DataIOError, ValidationError


def _parse_lines(text: str, source: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


class RunConfig:
    """Typed view over flat key=value pairs with unknown-key rejection."""

    def __init__(self, values: dict[str, str] | None = None, source: str = "<args>"):
        self._values = dict(values or {})
        self._source = source
        self._resolved: dict[str, str] = {}
        self._consumed: set[str] = set()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        return cls(_parse_lines(text, str(path)), source=str(path))

    def apply_overrides(self, pairs) -> None:
        """Apply `key=value` strings (e.g. from repeated --set flags)."""
        for pair in pairs:
            if "=" not in pair:
                raise ValidationError(f"override {pair!r} must look like key=value")
            key, value = (part.strip() for part in pair.split("=", 1))
            self._values[key] = value

    def _take(self, key: str, default):
        self._consumed.add(key)
        if key in self._values:
            return self._values[key]
        if default is _REQUIRED:
            raise ValidationError(f"{self._source}: missing required key {key!r}")
        return default

    def str_(self, key: str, default=None) -> str | None:
        value = self._take(key, default)
        if value is not None:
            self._resolved[key] = str(value)
        return value

    def int_(self, key: str, default=None) -> int | None:
        value = self._take(key, default)
        if value is None:
            return None
        try:
            out = int(str(value))
        except ValueError as exc:
            raise ValidationError(f"{self._source}: key {key!r} must be an integer, got {value!r}") from exc
        self._resolved[key] = str(out)
        return out

    def float_(self, key: str, default=None) -> float | None:
        value = self._take(key, default)
        if value is None:
            return None
        try:
            out = float(str(value))
        except ValueError as exc:
            raise ValidationError(f"{self._source}: key {key!r} must be a number, got {value!r}") from exc
        self._resolved[key] = f"{out:g}"
        return out

    def bool_(self, key: str, default=None) -> bool | None:
        value = self._take(key, default)
        if value is None:
            return None
        if isinstance(value, bool):
            out = value
        else:
            text = str(value).strip().lower()
            if text in ("true", "1", "yes", "on"):
                out = True
            elif text in ("false", "0", "no", "off"):
                out = False
            else:
                raise ValidationError(f"{self._source}: key {key!r} must be true/false, got {value!r}")
        self._resolved[key] = "true" if out else "false"
        return out

    def list_(self, key: str, default=None, convert=str) -> list | None:
        value = self._take(key, default)
        if value is None:
            return None
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [item.strip() for item in str(value).split(",") if item.strip()]
        if not items:
            raise ValidationError(f"{self._source}: key {key!r} must be a nonempty list")
        try:
            out = [convert(item) for item in items]
        except (ValueError, ValidationError) as exc:
            raise ValidationError(f"{self._source}: key {key!r}: {exc}") from exc
        self._resolved[key] = ",".join(str(item) for item in out)
        return out

    def reject_unknown(self) -> None:
        unknown = sorted(set(self._values) - self._consumed)
        if unknown:
            raise ValidationError(f"{self._source}: unknown config keys: {', '.join(unknown)}")

    def resolved_lines(self) -> list[str]:
        """`key = value` lines of every consumed key, defaults included."""
        return [f"{key} = {self._resolved[key]}" for key in sorted(self._resolved)]


_REQUIRED = object()
REQUIRED = _REQUIRED
