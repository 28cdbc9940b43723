"""Label taxonomy: the <OS, Browser, Application> tuple and its projections."""

import ipaddress
import logging
import pathlib
import tomllib
from enum import Enum
from typing import NamedTuple

from pydantic import Extra, validator

from ..base import BaseModel
from ..exceptions import LabelError

log = logging.getLogger(__name__)


def _norm(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


class _LabelEnum(str, Enum):
    """Enum parsed case-insensitively from its name or a dataset alias"""

    @classmethod
    def aliases(cls) -> dict[str, str]:
        return {}

    @classmethod
    def parse(cls, text: str) -> "_LabelEnum":
        key = _norm(text)
        for m in cls:
            if _norm(m.value) == key:
                return m
        alias = {_norm(k): v for k, v in cls.aliases().items()}.get(key)
        if alias is not None:
            return cls(alias)
        raise LabelError(f"unknown {cls.__name__} label {text!r}, expected one of {[m.value for m in cls]}")

    def __str__(self) -> str:
        return self.value


class OS(_LabelEnum):
    Windows = "Windows"
    Ubuntu = "Ubuntu"
    OSX = "OSX"

    @classmethod
    def aliases(cls) -> dict[str, str]:
        return {"Linux": "Ubuntu", "Linux-Ubuntu": "Ubuntu", "MacOS": "OSX", "Mac OS X": "OSX", "Win": "Windows"}


class Browser(_LabelEnum):
    Chrome = "Chrome"
    Firefox = "Firefox"
    IExplorer = "IExplorer"
    Safari = "Safari"
    NonBrowser = "NonBrowser"

    @classmethod
    def aliases(cls) -> dict[str, str]:
        return {"Internet Explorer": "IExplorer", "IE": "IExplorer", "None": "NonBrowser"}


class Application(_LabelEnum):
    Twitter = "Twitter"
    GoogleServices = "GoogleServices"
    Unidentified = "Unidentified"
    MicrosoftServices = "MicrosoftServices"
    Youtube = "Youtube"
    Facebook = "Facebook"
    Teamviewer = "Teamviewer"
    Dropbox = "Dropbox"
    Skype = "Skype"

    @classmethod
    def aliases(cls) -> dict[str, str]:
        return {
            "Google-Background": "GoogleServices",
            "Microsoft-Background": "MicrosoftServices",
            "Unknown": "Unidentified",
        }


class LabelTuple(NamedTuple):
    os: OS
    browser: Browser
    application: Application

    @classmethod
    def parse(cls, text: str) -> "LabelTuple":
        parts = [p.strip() for p in text.replace("/", ",").split(",")]
        if len(parts) != 3:
            raise LabelError(f"label {text!r} must have 3 comma separated parts: os,browser,application")
        return cls.of(*parts)

    @classmethod
    def of(cls, os: str, browser: str, application: str) -> "LabelTuple":
        return cls(OS.parse(os), Browser.parse(browser), Application.parse(application))

    def __str__(self) -> str:
        return f"{self.os.value},{self.browser.value},{self.application.value}"


class Target(str, Enum):
    """What part of the label tuple a classifier predicts"""

    Tuple = "Tuple"
    OS = "OS"
    Browser = "Browser"
    OSBrowser = "OSBrowser"
    Application = "Application"

    def project(self, label: LabelTuple) -> str:
        match self:
            case Target.Tuple:
                return str(label)
            case Target.OS:
                return label.os.value
            case Target.Browser:
                return label.browser.value
            case Target.OSBrowser:
                return f"{label.os.value},{label.browser.value}"
            case Target.Application:
                return label.application.value

    @classmethod
    def parse(cls, text: str) -> "Target":
        for m in cls:
            if _norm(m.value) == _norm(text):
                return m
        raise ValueError(f"unknown target {text!r}, expected one of {[m.value for m in cls]}")


def unlabeled(default_os: OS) -> LabelTuple:
    return LabelTuple(default_os, Browser.NonBrowser, Application.Unidentified)


class LabelRule(BaseModel):
    """Partial label for sessions whose server endpoint matches"""

    network: str | None = None
    port: int | None = None
    capture: str | None = None
    os: str | None = None
    browser: str | None = None
    application: str | None = None

    class Config:
        extra = Extra.forbid

    @validator("network")
    def _valid_network(cls, v):
        if v is not None:
            ipaddress.ip_network(v, strict=False)
        return v

    def matches(self, capture: str, server_ip: str, server_port: int) -> bool:
        if self.capture is not None and self.capture != capture:
            return False
        if self.port is not None and self.port != server_port:
            return False
        if self.network is not None and ipaddress.ip_address(server_ip) not in ipaddress.ip_network(self.network, strict=False):
            return False
        return True


class LabelDefaults(BaseModel):
    os: str = OS.Windows.value

    class Config:
        extra = Extra.forbid


class LabelRules(BaseModel):
    """Sidecar mapping from captures and server endpoints to labels.

    Lookup order: the first matching rule supplies the fields it sets, the
    capture mapping fills the rest, and unlabeled sessions fall back to
    <defaults.os, NonBrowser, Unidentified>.
    """

    captures: dict[str, str] = {}
    rules: list[LabelRule] = []
    defaults: LabelDefaults = LabelDefaults()

    class Config:
        extra = Extra.forbid

    @validator("captures")
    def _valid_captures(cls, v):
        for name, label in v.items():
            try:
                LabelTuple.parse(label)
            except LabelError as e:
                raise ValueError(f"captures.{name}: {e}") from None
        return v

    @classmethod
    def load(cls, path: pathlib.Path | str) -> "LabelRules":
        p = pathlib.Path(path)
        try:
            with open(p, "rb") as f:
                data = tomllib.load(f)
            return cls(**data)
        except tomllib.TOMLDecodeError as e:
            raise LabelError(f"{p}: {e}") from None
        except ValueError as e:
            raise LabelError(f"{p}: {e}") from None

    def label_for(self, capture: str, server_ip: str, server_port: int, default_os: OS | None = None) -> LabelTuple:
        fields: dict[str, str] = {}
        for rule in self.rules:
            if rule.matches(capture, server_ip, server_port):
                fields = {k: getattr(rule, k) for k in ("os", "browser", "application") if getattr(rule, k)}
                break

        if capture in self.captures:
            base = LabelTuple.parse(self.captures[capture])
        else:
            base = unlabeled(default_os or OS.parse(self.defaults.os))

        return LabelTuple(
            OS.parse(fields["os"]) if "os" in fields else base.os,
            Browser.parse(fields["browser"]) if "browser" in fields else base.browser,
            Application.parse(fields["application"]) if "application" in fields else base.application,
        )
