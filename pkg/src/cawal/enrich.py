"""Pure enrichment of raw request context into stored dimensions.

All functions here are total, deterministic and reentrant: same input, same
output, no shared state. Lookup tables are plain data loaded once and passed
in (or bound via :class:`Enricher`).
"""

from __future__ import annotations

import csv
import hashlib
import ipaddress
import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .model import (
    BrowserType,
    GeoEntry,
    OriginClass,
    ReferrerInfo,
    RefType,
    UserAgentInfo,
    truncate_text,
)

DATA_DIR = Path(__file__).parent / "data"

UNKNOWN_COUNTRY = "ZZ"

# Windows NT kernel token -> marketing version. NT 10.0 is ambiguous between
# Windows 10 and 11; the ambiguous token maps to the latest release.
_WINDOWS_NT_VERSIONS = {
    "10.0": "11",
    "6.3": "8.1",
    "6.2": "8",
    "6.1": "7",
    "6.0": "Vista",
    "5.2": "XP",
    "5.1": "XP",
}

_RE_WINDOWS_NT = re.compile(r"Windows NT (\d+\.\d+)")
_RE_MAC = re.compile(r"Mac OS X (\d+[._]\d+(?:[._]\d+)?)")
_RE_IOS = re.compile(r"(?:iPhone|iPad|iPod).*?OS (\d+(?:[._]\d+)*)", re.S)
_RE_ANDROID = re.compile(r"Android (\d+(?:\.\d+)*)")

# (needle, browser name, version regex) in precedence order; more specific
# tokens first since Chrome/Safari appear in many UA strings.
_BROWSER_RULES = (
    ("Edg/", "Edge", re.compile(r"Edg/(\d+)")),
    ("Edge/", "Edge", re.compile(r"Edge/(\d+)")),
    ("OPR/", "Opera", re.compile(r"OPR/(\d+)")),
    ("Opera", "Opera", re.compile(r"Opera[/ ](\d+)")),
    ("SamsungBrowser/", "Samsung Internet", re.compile(r"SamsungBrowser/(\d+)")),
    ("Firefox/", "Firefox", re.compile(r"Firefox/(\d+)")),
    ("CriOS/", "Chrome", re.compile(r"CriOS/(\d+)")),
    ("Chromium/", "Chromium", re.compile(r"Chromium/(\d+)")),
    ("Chrome/", "Chrome", re.compile(r"Chrome/(\d+)")),
    ("MSIE ", "Internet Explorer", re.compile(r"MSIE (\d+)")),
    ("Trident/", "Internet Explorer", re.compile(r"rv:(\d+)")),
)

_MOBILE_TOKENS = ("Mobile", "Android", "iPhone", "iPad", "iPod", "Windows Phone")


def load_bot_list(path: Path | None = None) -> tuple[str, ...]:
    """Load the bot-substring list, one lowercase entry per line."""
    path = path or DATA_DIR / "bots.txt"
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            entries.append(line)
    return tuple(entries)


@dataclass(frozen=True)
class SearchEngine:
    pattern: str  # exact host or bare label
    query_param: str
    display_name: str


def load_search_engines(path: Path | None = None) -> tuple[SearchEngine, ...]:
    path = path or DATA_DIR / "search_engines.csv"
    engines = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        pattern, param, name = next(csv.reader([line]))
        engines.append(SearchEngine(pattern.lower(), param, name))
    return tuple(engines)


def load_host_list(path: Path) -> tuple[str, ...]:
    hosts = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            hosts.append(line)
    return tuple(hosts)


def load_social_hosts(path: Path | None = None) -> tuple[str, ...]:
    return load_host_list(path or DATA_DIR / "social_hosts.txt")


def _parse_ip(text: str) -> int:
    text = text.strip()
    if "." in text:
        return int(ipaddress.IPv4Address(text))
    return int(text)


def load_geo_table(path: Path | None = None) -> tuple[GeoEntry, ...]:
    """Load a ``start_ip,end_ip,country`` CSV into a sorted range table."""
    path = path or DATA_DIR / "geoip.csv"
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        start, end, country = next(csv.reader([line]))
        entries.append(GeoEntry(_parse_ip(start), _parse_ip(end), country.strip()))
    entries.sort(key=lambda e: e.ip_range_start)
    for prev, cur in zip(entries, entries[1:]):
        if cur.ip_range_start <= prev.ip_range_end:
            raise ValueError(
                f"overlapping geo ranges at {cur.ip_range_start:#x} in {path}"
            )
    return tuple(entries)


def parse_user_agent(ua: str, bot_list: tuple[str, ...]) -> UserAgentInfo:
    """Classify a user-agent string into OS, browser and type dimensions.

    Unknown patterns yield type 0 with empty names; any substring from
    ``bot_list`` (case-insensitive) forces type 3 with the matched entry as
    the browser name.
    """
    if not ua:
        return UserAgentInfo()

    lowered = ua.lower()
    for entry in bot_list:
        if entry in lowered:
            version = ""
            m = re.search(re.escape(entry) + r"/(\d+(?:\.\d+)*)", lowered)
            if m:
                version = m.group(1)
            return UserAgentInfo(
                os_name="",
                os_version="",
                browser_name=entry,
                browser_version=version,
                browser_type=BrowserType.BOT,
            )

    os_name, os_version = _parse_os(ua)
    browser_name, browser_version = _parse_browser(ua)

    if not browser_name and not os_name:
        return UserAgentInfo()

    if any(token in ua for token in _MOBILE_TOKENS):
        browser_type = BrowserType.MOBILE
    elif browser_name:
        browser_type = BrowserType.DESKTOP
    else:
        browser_type = BrowserType.UNKNOWN

    return UserAgentInfo(
        os_name=os_name,
        os_version=os_version,
        browser_name=browser_name,
        browser_version=browser_version,
        browser_type=browser_type,
    )


def _parse_os(ua: str) -> tuple[str, str]:
    m = _RE_WINDOWS_NT.search(ua)
    if m:
        return "Windows", _WINDOWS_NT_VERSIONS.get(m.group(1), m.group(1))
    if "Windows Phone" in ua:
        return "Windows Phone", ""
    if "Windows" in ua:
        return "Windows", ""
    m = _RE_IOS.search(ua)
    if m:
        return "iOS", m.group(1).replace("_", ".")
    m = _RE_MAC.search(ua)
    if m:
        return "macOS", m.group(1).replace("_", ".")
    m = _RE_ANDROID.search(ua)
    if m:
        return "Android", m.group(1)
    if "Android" in ua:
        return "Android", ""
    if "CrOS" in ua:
        return "ChromeOS", ""
    if "Linux" in ua or "X11" in ua:
        return "Linux", ""
    return "", ""


def _parse_browser(ua: str) -> tuple[str, str]:
    for needle, name, version_re in _BROWSER_RULES:
        if needle in ua:
            m = version_re.search(ua)
            return name, m.group(1) if m else ""
    # Safari reports its real version behind "Version/"; a bare Safari token
    # is some WebKit shell, left unrecognized.
    if "Safari/" in ua:
        m = re.search(r"Version/(\d+)", ua)
        if m:
            return "Safari", m.group(1)
    return "", ""


def _host_of(url: str) -> str:
    try:
        host = urlsplit(url).hostname or ""
    except ValueError:
        return ""
    return host.lower()


def _matches_engine(host: str, engine: SearchEngine) -> bool:
    if host == engine.pattern:
        return True
    return "." not in engine.pattern and engine.pattern in host.split(".")


def _host_matches(host: str, entry: str) -> bool:
    return host == entry or host.endswith("." + entry)


def match_search_engine(
    host: str, engines: tuple[SearchEngine, ...]
) -> SearchEngine | None:
    for engine in engines:
        if _matches_engine(host, engine):
            return engine
    return None


def classify_referrer(
    referrer_url: str,
    landing_host: str,
    own_domains: tuple[str, ...],
    search_engines: tuple[SearchEngine, ...],
    social_hosts: tuple[str, ...] = (),
    main_hosts: tuple[str, ...] = (),
) -> ReferrerInfo:
    """Classify how a session arrived.

    Precedence: empty referrer is direct; the configured main site wins over
    other own (sub)domains; then search engines (with decoded keywords),
    social hosts, and finally any external site. A malformed referrer URL is
    treated as external with the raw text (truncated) as host.
    """
    if not referrer_url:
        return ReferrerInfo(RefType.DIRECT, "", "")

    host = _host_of(referrer_url)
    if not host:
        return ReferrerInfo(RefType.EXTERNAL, truncate_text(referrer_url), "")

    if host in main_hosts:
        return ReferrerInfo(RefType.MAIN_SITE, host, "")
    if any(_host_matches(host, d) for d in own_domains):
        return ReferrerInfo(RefType.SUBDOMAIN, host, "")

    engine = match_search_engine(host, search_engines)
    if engine is not None:
        search_key = ""
        try:
            query = parse_qs(urlsplit(referrer_url).query)
            values = query.get(engine.query_param)
            if values:
                search_key = truncate_text(values[0])
        except ValueError:
            pass
        return ReferrerInfo(RefType.SEARCH_ENGINE, host, search_key)

    if any(_host_matches(host, s) for s in social_hosts):
        return ReferrerInfo(RefType.SOCIAL, host, "")

    return ReferrerInfo(RefType.EXTERNAL, truncate_text(host), "")


def geo_lookup(ip: str, table: tuple[GeoEntry, ...]) -> str:
    """Binary-search the sorted range table; misses map to ``"ZZ"``."""
    try:
        value = int(ipaddress.IPv4Address(ip))
    except (ipaddress.AddressValueError, ValueError):
        return UNKNOWN_COUNTRY
    lo, hi = 0, len(table) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        entry = table[mid]
        if value < entry.ip_range_start:
            hi = mid - 1
        elif value > entry.ip_range_end:
            lo = mid + 1
        else:
            return entry.country
    return UNKNOWN_COUNTRY


def parse_cidrs(cidrs) -> tuple[ipaddress.IPv4Network, ...]:
    return tuple(ipaddress.IPv4Network(c) for c in cidrs)


def ip_in_cidrs(ip: str, networks: tuple[ipaddress.IPv4Network, ...]) -> bool:
    try:
        addr = ipaddress.IPv4Address(ip)
    except (ipaddress.AddressValueError, ValueError):
        return False
    return any(addr in net for net in networks)


def classify_origin(
    ip: str,
    in_house_networks: tuple[ipaddress.IPv4Network, ...],
    home_country: str,
    table: tuple[GeoEntry, ...],
) -> OriginClass:
    """Three-way origin split; in-house CIDRs take precedence over geography."""
    if ip_in_cidrs(ip, in_house_networks):
        return OriginClass.IN_HOUSE
    try:
        ipaddress.IPv4Address(ip)
    except (ipaddress.AddressValueError, ValueError):
        return OriginClass.OUT_COUNTRY
    if geo_lookup(ip, table) == home_country:
        return OriginClass.IN_COUNTRY
    return OriginClass.OUT_COUNTRY


def visitor_hash(ip: str, ua: str) -> str:
    """Stable identity fallback when neither token nor user id is present."""
    digest = hashlib.sha256(f"{ip}|{ua}".encode("utf-8")).hexdigest()
    return digest[:32]


class Enricher:
    """Enrichment functions bound to one loaded configuration."""

    def __init__(
        self,
        bot_list: tuple[str, ...] | None = None,
        search_engines: tuple[SearchEngine, ...] | None = None,
        social_hosts: tuple[str, ...] | None = None,
        geo_table: tuple[GeoEntry, ...] | None = None,
        own_domains: tuple[str, ...] = (),
        main_hosts: tuple[str, ...] = (),
        in_house_cidrs: tuple[str, ...] = (),
        home_country: str = "",
    ):
        self.bot_list = bot_list if bot_list is not None else load_bot_list()
        self.search_engines = (
            search_engines if search_engines is not None else load_search_engines()
        )
        self.social_hosts = (
            social_hosts if social_hosts is not None else load_social_hosts()
        )
        self.geo_table = geo_table if geo_table is not None else load_geo_table()
        self.own_domains = tuple(d.lower() for d in own_domains)
        self.main_hosts = tuple(h.lower() for h in main_hosts)
        self.in_house_networks = tuple(
            ipaddress.IPv4Network(c) for c in in_house_cidrs
        )
        self.home_country = home_country

    def user_agent(self, ua: str) -> UserAgentInfo:
        return parse_user_agent(ua, self.bot_list)

    def referrer(self, referrer_url: str, landing_host: str = "") -> ReferrerInfo:
        return classify_referrer(
            referrer_url,
            landing_host,
            self.own_domains,
            self.search_engines,
            self.social_hosts,
            self.main_hosts,
        )

    def referrer_display_name(self, info: ReferrerInfo) -> str:
        """Friendly referrer label stored alongside the classified fields."""
        if info.ref_type == RefType.SEARCH_ENGINE:
            engine = match_search_engine(info.ref_host, self.search_engines)
            if engine is not None:
                return engine.display_name
        return info.ref_host

    def country(self, ip: str) -> str:
        return geo_lookup(ip, self.geo_table)

    def origin(self, ip: str) -> OriginClass:
        return classify_origin(
            ip, self.in_house_networks, self.home_country, self.geo_table
        )
