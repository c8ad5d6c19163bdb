"""HTTP fetch backends.

All network access in the engine goes through one of these; tests run
against the in-process fixture fetcher or a local socket server, so
replays are byte-identical and nothing touches the outside world.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Protocol
from urllib.parse import urlencode, urlparse

import requests

from .errors import BadGatewayError, FetchError, FetchTimeoutError, NotFoundError

DEFAULT_TIMEOUT = 20.0
MAX_REDIRECTS = 5
MAX_BODY_BYTES = 32 * 1024 * 1024
POLITENESS_DELAY = 0.5


@dataclass
class FetchResponse:
    url: str
    final_url: str
    status: int
    content_type: str
    body: bytes

    @property
    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")


class Fetcher(Protocol):
    def get(self, url: str) -> FetchResponse: ...

    def head(self, url: str) -> FetchResponse: ...

    def post(self, url: str, data: dict[str, str]) -> FetchResponse: ...


def raise_for_status(url: str, status: int) -> None:
    if status == 404:
        raise NotFoundError(f"404 for {url}", url=url, status=404)
    if status == 502:
        raise BadGatewayError(f"502 for {url}", url=url, status=502)
    if status >= 400:
        raise FetchError(f"HTTP {status} for {url}", url=url, status=status)


class HttpFetcher:
    """requests-backed fetcher with the engine's access policy: bounded
    timeout, bounded redirects, bounded body size, per-host politeness."""

    def __init__(
        self,
        timeout: float = DEFAULT_TIMEOUT,
        max_redirects: int = MAX_REDIRECTS,
        max_body: int = MAX_BODY_BYTES,
        politeness_delay: float = POLITENESS_DELAY,
        session: requests.Session | None = None,
    ):
        self.timeout = timeout
        self.max_body = max_body
        self.politeness_delay = politeness_delay
        self._session = session or requests.Session()
        self._session.max_redirects = max_redirects
        self._last_hit: dict[str, float] = {}

    def _polite(self, url: str) -> None:
        if self.politeness_delay <= 0:
            return
        host = urlparse(url).netloc
        wait = self._last_hit.get(host, 0.0) + self.politeness_delay - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_hit[host] = time.monotonic()

    def _request(self, method: str, url: str, data: dict[str, str] | None = None) -> FetchResponse:
        self._polite(url)
        try:
            resp = self._session.request(
                method,
                url,
                data=data,
                timeout=self.timeout,
                allow_redirects=True,
                stream=True,
            )
        except requests.Timeout as exc:
            raise FetchTimeoutError(f"timeout for {url}", url=url) from exc
        except requests.TooManyRedirects as exc:
            raise FetchError(f"too many redirects for {url}", url=url) from exc
        except requests.RequestException as exc:
            raise FetchError(f"fetch failed for {url}: {exc}", url=url) from exc
        with resp:
            raise_for_status(url, resp.status_code)
            body = b"" if method == "HEAD" else resp.raw.read(self.max_body + 1, decode_content=True)
            if len(body) > self.max_body:
                raise FetchError(f"body exceeds {self.max_body} bytes for {url}", url=url)
            return FetchResponse(
                url=url,
                final_url=resp.url,
                status=resp.status_code,
                content_type=resp.headers.get("Content-Type", ""),
                body=body,
            )

    def get(self, url: str) -> FetchResponse:
        return self._request("GET", url)

    def head(self, url: str) -> FetchResponse:
        return self._request("HEAD", url)

    def post(self, url: str, data: dict[str, str]) -> FetchResponse:
        return self._request("POST", url, data=data)


@dataclass
class FixturePage:
    content_type: str
    body: bytes


class FixtureSite:
    """One fixture website: static paths plus form handler callables."""

    def __init__(self, pages: dict[str, FixturePage] | None = None):
        self.pages: dict[str, FixturePage] = pages or {}
        self.handlers: dict[str, object] = {}

    def add_page(self, path: str, body: str | bytes, content_type: str = "text/html") -> None:
        data = body.encode("utf-8") if isinstance(body, str) else body
        self.pages[path] = FixturePage(content_type=content_type, body=data)

    def add_handler(self, path: str, handler) -> None:
        """handler(params: dict[str, str]) -> (content_type, body_str)"""
        self.handlers[path] = handler


class FixtureFetcher:
    """In-process fetcher over fixture sites; the test-time Fetcher.

    URLs are matched by (host, path); query strings on GET requests are
    routed to form handlers just like POST bodies.
    """

    def __init__(self, sites: dict[str, FixtureSite]):
        # keys are base URLs like "http://mikdb.test"
        self._sites: dict[str, FixtureSite] = {}
        for base, site in sites.items():
            parsed = urlparse(base)
            self._sites[parsed.netloc] = site
        self.log: list[tuple[str, str, dict | None]] = []

    def _lookup(self, url: str) -> tuple[FixtureSite, str, dict[str, str]]:
        parsed = urlparse(url)
        site = self._sites.get(parsed.netloc)
        if site is None:
            raise NotFoundError(f"unknown fixture host {parsed.netloc}", url=url, status=404)
        params: dict[str, str] = {}
        if parsed.query:
            from urllib.parse import parse_qsl

            params = dict(parse_qsl(parsed.query))
        path = parsed.path or "/"
        return site, path, params

    def _respond(self, url: str, method: str, data: dict[str, str] | None) -> FetchResponse:
        self.log.append((method, url, data))
        site, path, params = self._lookup(url)
        if path in site.handlers:
            merged = dict(params)
            if data:
                merged.update(data)
            content_type, body = site.handlers[path](merged)
            return FetchResponse(
                url=url,
                final_url=url,
                status=200,
                content_type=content_type,
                body=body.encode("utf-8") if isinstance(body, str) else body,
            )
        page = site.pages.get(path)
        if page is None:
            raise NotFoundError(f"404 for {url}", url=url, status=404)
        return FetchResponse(
            url=url,
            final_url=url,
            status=200,
            content_type=page.content_type,
            body=page.body if method != "HEAD" else b"",
        )

    def get(self, url: str) -> FetchResponse:
        return self._respond(url, "GET", None)

    def head(self, url: str) -> FetchResponse:
        resp = self._respond(url, "HEAD", None)
        return resp

    def post(self, url: str, data: dict[str, str]) -> FetchResponse:
        return self._respond(url, "POST", data)


def encode_query(url: str, params: dict[str, str]) -> str:
    sep = "&" if urlparse(url).query else "?"
    return f"{url}{sep}{urlencode(params)}" if params else url
