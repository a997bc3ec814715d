"""Shared fixtures: a deterministic in-memory service plus account helpers."""

from __future__ import annotations

import re

import pytest

from e112core.clock import ManualClock
from e112core.config import ServiceConfig
from e112core.geo import Coordinate
from e112core.identity import Principal
from e112core.providers import ProviderSet
from e112core.service import CoreService
from e112core.store import MemoryStore


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def providers():
    return ProviderSet.fakes()


@pytest.fixture
def config():
    return ServiceConfig(push_backoff_base_s=0.0)


@pytest.fixture
def svc(clock, providers, config):
    service = CoreService(config=config, store=MemoryStore(), clock=clock,
                          providers=providers)
    yield service
    service.close()


def last_sms_code(svc: CoreService, phone: str) -> str:
    texts = [m["text"] for m in svc.providers.sms.messages_for(phone)]
    assert texts, f"no SMS sent to {phone}"
    match = re.search(r"\d{6}", texts[-1])
    assert match, f"no code in SMS text {texts[-1]!r}"
    return match.group()


def register_citizen(svc: CoreService, phone: str, name: str = "citizen",
                     push_token: str | None = None,
                     location: Coordinate | None = None) -> tuple[Principal, str]:
    challenge_id = svc.identity.begin_registration(phone)
    code = last_sms_code(svc, phone)
    session = svc.identity.complete_registration(challenge_id, code, name, push_token)
    principal = svc.identity.authenticate(session["token"])
    if location is not None:
        user = svc.identity.get_user(principal.user_id)
        svc.intake.record_location(user, location)
    return principal, session["token"]


def make_operator(svc: CoreService, phone: str = "+306900000001",
                  name: str = "dispatch") -> tuple[Principal, str]:
    svc.identity.provision_operator(phone, name)
    return register_citizen(svc, phone, name)
