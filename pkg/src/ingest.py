"""
Ingestion of scraped app metadata.
Parses line-delimited records, validates them against the 13-attribute schema,
and synthesizes stand-in corpora shaped after the scraped store marginals.
"""
import json
import logging
import datetime
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import pandas as pd

from app_config import CONTENT_RATINGS, CONTENT_RATING_ALIASES, VARIES_WITH_DEVICE
from errors import RecordParseError, DuplicateAppIdError, ConfigError

logger = logging.getLogger(__name__)

# Scraper field name -> AppRecord attribute
FIELD_MAP = {
    'appId': 'app_id',
    'adSupported': 'ad_supported',
    'contentRating': 'content_rating',
    'editorsChoice': 'editors_choice',
    'genreId': 'genre_id',
    'installs': 'installs',
    'offersIAP': 'offers_iap',
    'ratings': 'ratings',
    'released': 'released',
    'reviews': 'reviews',
    'scoreText': 'score_text',
    'size': 'size',
    'video': 'video',
    'store': 'store',
}
ATTRIBUTES = tuple(a for a in FIELD_MAP.values() if a not in ('app_id', 'store'))
BOOL_FIELDS = ('ad_supported', 'editors_choice', 'offers_iap', 'video')
COUNT_FIELDS = ('ratings', 'reviews')
STRING_FIELDS = ('content_rating', 'genre_id', 'installs', 'size', 'store')


@dataclass(frozen=True)
class AppRecord:
    app_id: str
    ad_supported: Optional[bool] = None
    content_rating: Optional[str] = None
    editors_choice: Optional[bool] = None
    genre_id: Optional[str] = None
    installs: Optional[str] = None
    offers_iap: Optional[bool] = None
    ratings: Optional[int] = None
    released: Optional[datetime.date] = None
    reviews: Optional[int] = None
    score_text: Optional[float] = None
    size: Optional[str] = None
    video: Optional[bool] = None
    store: Optional[str] = None

    def missing_attributes(self):
        return [a for a in ATTRIBUTES if getattr(self, a) is None]


class ParsedRecords(list):
    """List of AppRecords that also carries the per-line parse errors."""
    def __init__(self, records=(), errors=()):
        super().__init__(records)
        self.errors = list(errors)


@dataclass
class ValidationReport:
    record_count: int
    accepted: int
    missing: dict = field(default_factory=dict)
    rejected: list = field(default_factory=list)   # [(app_id, reason)]

    @property
    def rejected_count(self):
        return len(self.rejected)


def normalize_content_rating(value):
    return CONTENT_RATING_ALIASES.get(value, value)


def _coerce(attr, value):
    if value is None:
        return None
    if attr in BOOL_FIELDS:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ('true', 'false'):
            return value.lower() == 'true'
        raise ValueError(f"{attr} is not a boolean: {value!r}")
    if attr in COUNT_FIELDS:
        if isinstance(value, bool):
            raise ValueError(f"{attr} is not a count: {value!r}")
        if isinstance(value, (int, float)) and float(value).is_integer():
            return int(value)
        if isinstance(value, str) and value.strip().lstrip('-').isdigit():
            return int(value.strip())
        raise ValueError(f"{attr} is not a count: {value!r}")
    if attr == 'score_text':
        if isinstance(value, bool):
            raise ValueError(f"scoreText is not a number: {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"scoreText is not a number: {value!r}")
    if attr == 'released':
        if not isinstance(value, str):
            raise ValueError(f"released is not a date string: {value!r}")
        try:
            return datetime.date.fromisoformat(value)
        except ValueError:
            raise ValueError(f"released is not an ISO date: {value!r}")
    if attr == 'content_rating':
        if not isinstance(value, str):
            raise ValueError(f"contentRating is not a string: {value!r}")
        return normalize_content_rating(value)
    if not isinstance(value, str):
        raise ValueError(f"{attr} is not a string: {value!r}")
    return value


def _record_from_obj(obj):
    if not isinstance(obj, dict):
        raise ValueError("line is not an object")
    app_id = obj.get('appId')
    if not isinstance(app_id, str) or not app_id:
        raise ValueError("missing or empty appId")
    values = {'app_id': app_id}
    for src, attr in FIELD_MAP.items():
        if attr == 'app_id' or src not in obj:
            continue
        values[attr] = _coerce(attr, obj[src])
    return AppRecord(**values)


def parse_app_records(data: bytes, fmt: str = 'json_lines') -> ParsedRecords:
    """
    One AppRecord per input line, in input order.
    Malformed lines are collected on the result's .errors and skipped;
    a repeated appId is a hard error.
    """
    if fmt != 'json_lines':
        raise ConfigError(f"unsupported record format '{fmt}'")
    if isinstance(data, str):
        data = data.encode('utf-8')

    records, errors, seen = [], [], set()
    for line_no, raw in enumerate(data.decode('utf-8').split('\n'), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = _record_from_obj(json.loads(line))
        except (json.JSONDecodeError, ValueError) as e:
            errors.append(RecordParseError(line_no, str(e)))
            continue
        if record.app_id in seen:
            raise DuplicateAppIdError(record.app_id)
        seen.add(record.app_id)
        records.append(record)

    if errors:
        logger.warning(f"[INGEST] {len(errors)} malformed line(s) skipped")
    logger.info(f"[INGEST] Parsed {len(records)} app records")
    return ParsedRecords(records, errors)


def serialize_app_records(records) -> bytes:
    """Inverse of parse_app_records: scraper field names, absent attributes omitted."""
    reverse = {attr: src for src, attr in FIELD_MAP.items()}
    lines = []
    for rec in records:
        obj = {}
        for attr, value in asdict(rec).items():
            if value is None:
                continue
            if isinstance(value, datetime.date):
                value = value.isoformat()
            obj[reverse[attr]] = value
        lines.append(json.dumps(obj, ensure_ascii=False))
    return ("\n".join(lines) + ("\n" if lines else "")).encode('utf-8')


def load_corpus(path):
    with open(path, 'rb') as f:
        return parse_app_records(f.read())


def _rejection_reason(rec):
    if not isinstance(rec.app_id, str) or not rec.app_id:
        return "empty appId"
    for attr in BOOL_FIELDS:
        v = getattr(rec, attr)
        if v is not None and not isinstance(v, bool):
            return f"{attr} is not a boolean"
    for attr in COUNT_FIELDS:
        v = getattr(rec, attr)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            return f"{attr} is not a count"
        if v is not None and v < 0:
            return f"negative {attr}"
    if rec.score_text is not None:
        if not np.isfinite(rec.score_text) or not 0.0 <= rec.score_text <= 5.0:
            return "score out of range"
    if rec.content_rating is not None and rec.content_rating not in CONTENT_RATINGS:
        return f"unknown content rating '{rec.content_rating}'"
    if rec.released is not None and not isinstance(rec.released, datetime.date):
        return "released is not a date"
    return None


def validate_records(records) -> ValidationReport:
    """Report-only pass: per-attribute missing counts and rejected ids with reasons."""
    missing = {attr: 0 for attr in ATTRIBUTES}
    rejected = []
    seen = set()
    for rec in records:
        for attr in ATTRIBUTES:
            if getattr(rec, attr) is None:
                missing[attr] += 1
        reason = _rejection_reason(rec)
        if reason is None and rec.app_id in seen:
            reason = "duplicate appId"
        seen.add(rec.app_id)
        if reason:
            rejected.append((rec.app_id, reason))

    report = ValidationReport(
        record_count=len(records),
        accepted=len(records) - len(rejected),
        missing=missing,
        rejected=rejected,
    )
    logger.info(f"[INGEST] Validation: {report.accepted} accepted, {report.rejected_count} rejected")
    return report


# --- Synthetic corpus ---

INSTALL_VALUES = (
    '0+', '1+', '5+', '10+', '50+', '100+', '500+', '1,000+', '5,000+',
    '10,000+', '50,000+', '100,000+', '500,000+', '1,000,000+', '5,000,000+',
    '10,000,000+', '50,000,000+', '100,000,000+',
)
INSTALL_WEIGHTS = (1, 1, 2, 4, 5, 8, 9, 14, 14, 18, 16, 20, 15, 18, 12, 12, 6, 5)
GAME_SUBGENRES = ('GAME_ACTION', 'GAME_ARCADE', 'GAME_CASUAL', 'GAME_PUZZLE',
                  'GAME_SIMULATION', 'GAME_STRATEGY')

# Store marginals (true-share of 1793 scraped apps)
DEFAULT_BOOL_RATES = {
    'ad_supported': 956 / 1793,
    'editors_choice': 44 / 1793,
    'offers_iap': 926 / 1793,
    'video': 726 / 1793,
}
DEFAULT_RATING_MIX = {
    'Everyone': 1369 / 1793,
    'Teen': 267 / 1793,
    'Everyone 10+': 113 / 1793,
    'Mature 17+': 44 / 1793,
}


@dataclass
class SyntheticConfig:
    seed: int = 7
    count: int = 1793
    category_mix: dict = field(default_factory=lambda: {
        'Photography': 556 / 1793, 'Productivity': 482 / 1793, 'Games': 755 / 1793})
    snapshot_date: datetime.date = datetime.date(2022, 5, 4)
    store: Optional[str] = 'play'
    bool_rates: dict = field(default_factory=lambda: dict(DEFAULT_BOOL_RATES))
    rating_mix: dict = field(default_factory=lambda: dict(DEFAULT_RATING_MIX))
    missing_rate: float = 0.0
    varies_with_device_rate: float = 0.05
    mean_release_age_days: float = 1267.0
    median_size_kb: float = 29696.0

    def validate(self):
        if self.count < 0:
            raise ConfigError("synthetic count must be >= 0")
        for name, mix in (('category_mix', self.category_mix), ('rating_mix', self.rating_mix)):
            if not mix or any(p < 0 for p in mix.values()):
                raise ConfigError(f"{name} must be a nonempty map of nonnegative proportions")
            if abs(sum(mix.values()) - 1.0) > 1e-9:
                raise ConfigError(f"{name} proportions sum to {sum(mix.values())}, expected 1")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ConfigError("missing_rate must lie in [0, 1]")


def _allocate(count, mix):
    """Largest-remainder allocation of count over the mix, in key order."""
    keys = list(mix)
    quotas = np.array([mix[k] * count for k in keys])
    counts = np.floor(quotas).astype(int)
    remainder = count - counts.sum()
    order = np.argsort(-(quotas - counts), kind='stable')
    counts[order[:remainder]] += 1
    return dict(zip(keys, counts.tolist()))


def _format_size(kb):
    if kb < 1024:
        return f"{int(max(kb, 1))}k"
    return f"{kb / 1024:.1f}M"


def generate_synthetic_corpus(config: SyntheticConfig):
    """Deterministic stand-in corpus; pure function of the config."""
    config.validate()
    if config.count == 0:
        return []
    rng = np.random.default_rng(config.seed)

    genre_counts = _allocate(config.count, config.category_mix)
    genres = []
    for key, n in genre_counts.items():
        genres.extend([key] * n)
    genres = [genres[i] for i in rng.permutation(len(genres))]

    rating_keys = list(config.rating_mix)
    rating_p = np.array([config.rating_mix[k] for k in rating_keys])
    install_p = np.array(INSTALL_WEIGHTS, dtype=float)
    install_p /= install_p.sum()

    records = []
    for i, family in enumerate(genres):
        family_upper = family.upper()
        if family_upper in ('GAMES', 'GAME'):
            genre_id = GAME_SUBGENRES[rng.integers(len(GAME_SUBGENRES))]
        else:
            genre_id = family_upper

        ratings = int(rng.lognormal(mean=9.0, sigma=2.5))
        score = float(np.clip(np.round(rng.normal(4.1, 0.6), 1), 0.0, 5.0))
        age_days = int(rng.exponential(config.mean_release_age_days))
        if rng.random() < config.varies_with_device_rate:
            size = VARIES_WITH_DEVICE
        else:
            size = _format_size(rng.lognormal(np.log(config.median_size_kb), 1.0))

        values = {
            'ad_supported': bool(rng.random() < config.bool_rates['ad_supported']),
            'content_rating': rating_keys[rng.choice(len(rating_keys), p=rating_p)],
            'editors_choice': bool(rng.random() < config.bool_rates['editors_choice']),
            'genre_id': genre_id,
            'installs': INSTALL_VALUES[rng.choice(len(INSTALL_VALUES), p=install_p)],
            'offers_iap': bool(rng.random() < config.bool_rates['offers_iap']),
            'ratings': ratings,
            'released': config.snapshot_date - datetime.timedelta(days=age_days),
            'reviews': int(ratings * rng.uniform(0.2, 0.6)),
            'score_text': score,
            'size': size,
            'video': bool(rng.random() < config.bool_rates['video']),
        }
        if config.missing_rate > 0:
            drops = rng.random(len(ATTRIBUTES)) < config.missing_rate
            for attr, drop in zip(ATTRIBUTES, drops):
                if drop:
                    values[attr] = None

        app_id = f"com.synthetic.{genre_id.lower()}.app{i:05d}"
        records.append(AppRecord(app_id=app_id, store=config.store, **values))

    logger.info(f"[INGEST] Generated {len(records)} synthetic records (seed={config.seed})")
    return records


def records_frame(records):
    """Column-wise view of a corpus, one row per record."""
    return pd.DataFrame([asdict(r) for r in records], columns=['app_id', *ATTRIBUTES, 'store'])
