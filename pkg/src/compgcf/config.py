"""Training configuration and its ``key=value`` text format."""
from dataclasses import dataclass, fields

# keys that are not valid Python identifiers in the text format
_KEY_TO_FIELD = {"lambda": "l2"}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    d: int = 128
    c: int = 500
    t: int = 2
    L: int = 3
    lr: float = 1e-3
    l2: float = 1e-3
    w_star: float = 0.5
    m: int = 1
    negatives_per_positive: int = 5
    epochs_pretrain_max: int = 1000
    epochs_main_max: int = 1000
    patience: int = 10
    batch_size_triplets: int = 8192
    assignment_batch_rows: int = 4096
    rcond: float = 1e-10
    seed: int = 42
    balance_factor: float = 1.05
    scalar_width: int = 32
    init_method: str = "partition"
    validation_fraction: float = 0.1
    log_wall_time: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self, num_entities: int | None = None) -> None:
        def bad(key, msg):
            raise ConfigError(f"{_FIELD_TO_KEY.get(key, key)}: {msg}")

        for key in ("d", "c", "t", "m", "negatives_per_positive", "batch_size_triplets",
                    "assignment_batch_rows"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        for key in ("L", "epochs_pretrain_max", "epochs_main_max", "patience"):
            if getattr(self, key) < 0:
                bad(key, "must be >= 0")
        if self.t > self.c:
            bad("t", "t exceeds c")
        if not 0.0 < self.w_star <= 1.0:
            bad("w_star", "must lie in (0, 1]")
        if not 0.0 < self.rcond < 1.0:
            bad("rcond", "must lie in (0, 1)")
        if self.lr <= 0:
            bad("lr", "must be positive")
        if self.l2 < 0:
            bad("l2", "must be non-negative")
        if self.balance_factor < 1.0:
            bad("balance_factor", "must be >= 1.0")
        if self.scalar_width not in (32, 64):
            bad("scalar_width", "must be 32 or 64")
        if self.init_method not in ("partition", "random"):
            bad("init_method", "must be 'partition' or 'random'")
        if not 0.0 <= self.validation_fraction < 1.0:
            bad("validation_fraction", "must lie in [0, 1)")
        if num_entities is not None and self.c > num_entities:
            bad("c", f"c={self.c} exceeds the {num_entities} users+items")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, bool):
                val = str(val).lower()
            lines.append(f"{_FIELD_TO_KEY.get(f.name, f.name)}={val}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


def parse_config_text(text: str) -> TrainConfig:
    types = {f.name: f.type for f in fields(TrainConfig)}
    types = {k: {"int": int, "float": float, "str": str, "bool": bool}.get(v, v) for k, v in types.items()}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        name = _KEY_TO_FIELD.get(key, key)
        if name not in types:
            raise ConfigError(f"{key}: unknown key")
        values[name] = _coerce(key, raw, types[name])
    return TrainConfig(**values)


def parse_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
