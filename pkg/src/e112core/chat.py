"""Operator-established, geofence-gated, post-moderated group chat.

Eligibility is checked once, at join time, against the member's last
known location. Messages publish immediately with a per-group gapless
sequence; moderators can remove messages (the body is scrubbed at rest,
only a redaction placeholder survives), mute users going forward, and
permanently close a group.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from typing import Any

from .clock import Clock
from .config import ServiceConfig
from .errors import (
    BodyInvalid,
    Forbidden,
    GroupClosed,
    Muted,
    NotFound,
    NotMember,
    OutsideArea,
    UnknownAlert,
    UnknownTarget,
)
from .events import EventBus, EventKind
from .geo import GeoIndex, Geofence, geofence_contains
from .identity import IdentityService, Principal
from .model import (
    ChatGroup,
    ChatMessage,
    GroupStatus,
    MessageState,
    Role,
    codepoints,
    from_canon,
    to_canon,
    transition,
)
from .store import MemoryStore

REDACTION_PLACEHOLDER = "[removed by moderator]"


class ChatService:
    def __init__(self, store: MemoryStore, clock: Clock, events: EventBus,
                 index: GeoIndex, identity: IdentityService, config: ServiceConfig):
        self.store = store
        self.clock = clock
        self.events = events
        self.index = index
        self.identity = identity
        self.config = config
        self._locks_guard = threading.Lock()
        self._group_locks: dict[str, threading.Lock] = {}

    def _lock_for(self, group_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._group_locks.setdefault(group_id, threading.Lock())

    def _get_group(self, group_id: str) -> tuple[ChatGroup, int]:
        try:
            doc, version = self.store.get("chat_group", group_id)
        except NotFound:
            raise NotFound(f"no chat group {group_id}") from None
        return from_canon(doc), version

    def _member_ids(self, group_id: str) -> list[str]:
        return [doc["user_id"]
                for doc, _ in self.store.list("membership", where={"group_id": group_id})]

    def is_member(self, group_id: str, user_id: str) -> bool:
        return self.store.exists("membership", f"{group_id}:{user_id}")

    # -- operations --------------------------------------------------------

    def open_group(self, principal: Principal, alert_id: str, area: Geofence,
                   title: str, group_id: str) -> ChatGroup:
        if principal.role != Role.operator:
            raise Forbidden("operator role required")
        if not self.store.exists("alert", alert_id):
            raise UnknownAlert(f"no alert {alert_id}")
        group = ChatGroup(
            id=group_id, alert_id=alert_id, area=area, title=title,
            status=GroupStatus.open, created_by=principal.user_id,
            created_at=self.clock.now(),
        )
        self.store.put("chat_group", group.id, to_canon(group), 0)
        announcement = {"group_id": group.id, "alert_id": alert_id, "title": title}
        self.events.emit_many(sorted(self.index.query(area)),
                              EventKind.group_opened, announcement)
        return group

    def join_group(self, principal: Principal, group_id: str) -> dict[str, Any]:
        group, _ = self._get_group(group_id)
        if group.status != GroupStatus.open:
            raise GroupClosed(f"group {group_id} is closed")
        user = self.identity.get_user(principal.user_id)
        if not user.verified:
            raise Forbidden("verification required to join")
        if user.last_location is None or \
                not geofence_contains(group.area, user.last_location[0]):
            raise OutsideArea("join requires a last known location inside the group area")
        key = f"{group_id}:{user.id}"
        if not self.store.exists("membership", key):
            self.store.put("membership", key, {
                "kind": "membership", "id": key, "group_id": group_id,
                "user_id": user.id, "created_at": self.clock.now(),
            }, 0)
        return {"group_id": group_id, "user_id": user.id}

    def post_message(self, principal: Principal, group_id: str, body: str) -> ChatMessage:
        if not isinstance(body, str) or not 1 <= codepoints(body) <= self.config.chat_body_max:
            raise BodyInvalid(
                f"message body must be 1..{self.config.chat_body_max} code points")
        with self._lock_for(group_id):
            group, _ = self._get_group(group_id)
            if group.status != GroupStatus.open:
                raise GroupClosed(f"group {group_id} is closed")
            if not self.is_member(group_id, principal.user_id):
                raise NotMember("join the group before posting")
            if principal.user_id in group.muted_users:
                raise Muted("you are muted in this group")
            seq = self.store.count("chat_message", where={"group_id": group_id}) + 1
            message = ChatMessage(
                id=f"{group_id}:{seq:08d}", group_id=group_id,
                author_id=principal.user_id, body=body,
                created_at=self.clock.now(), state=MessageState.visible, seq=seq,
            )
            self.store.put("chat_message", message.id, to_canon(message), 0)
        self.events.emit_many(self._member_ids(group_id), EventKind.chat_message, {
            "group_id": group_id, "message_id": message.id, "seq": seq,
            "author_id": principal.user_id, "body": body,
        })
        return message

    def history(self, principal: Principal, group_id: str,
                since_seq: int = 0, limit: int | None = None) -> list[dict[str, Any]]:
        self._get_group(group_id)
        if principal.role != Role.operator and not self.is_member(group_id, principal.user_id):
            raise NotMember("history is for members and operators")
        rows = [from_canon(doc)
                for doc, _ in self.store.list("chat_message", where={"group_id": group_id})]
        rows.sort(key=lambda m: m.seq)
        out = []
        for m in rows:
            if m.seq <= since_seq:
                continue
            if m.state == MessageState.removed:
                out.append({"id": m.id, "seq": m.seq, "author_id": m.author_id,
                            "state": "removed", "body": REDACTION_PLACEHOLDER,
                            "created_at": m.created_at})
            else:
                out.append({"id": m.id, "seq": m.seq, "author_id": m.author_id,
                            "state": "visible", "body": m.body,
                            "created_at": m.created_at})
            if limit is not None and len(out) >= limit:
                break
        return out

    def moderate(self, principal: Principal, group_id: str, action: str,
                 message_id: str | None = None, user_id: str | None = None) -> dict[str, Any]:
        if principal.role != Role.operator:
            raise Forbidden("operator role required")
        with self._lock_for(group_id):
            group, version = self._get_group(group_id)
            if action == "remove_message":
                return self._remove_message(group_id, message_id)
            if action in ("mute_user", "unmute_user"):
                if user_id is None or not self.store.exists("user", user_id):
                    raise UnknownTarget(f"no user {user_id}")
                muted = set(group.muted_users)
                if action == "mute_user":
                    muted.add(user_id)
                else:
                    muted.discard(user_id)
                updated = replace(group, muted_users=frozenset(muted))
                self.store.put("chat_group", group_id, to_canon(updated), version)
                return {"group_id": group_id, "muted_users": sorted(muted)}
            if action == "close_group":
                closed = replace(group, status=GroupStatus(
                    transition("chat_group", group.status, "closed")))
                self.store.put("chat_group", group_id, to_canon(closed), version)
                return {"group_id": group_id, "status": "closed"}
            raise UnknownTarget(f"unknown moderation action {action!r}")

    def _remove_message(self, group_id: str, message_id: str | None) -> dict[str, Any]:
        if message_id is None:
            raise UnknownTarget("remove_message needs a message id")
        try:
            doc, version = self.store.get("chat_message", message_id)
        except NotFound:
            raise UnknownTarget(f"no message {message_id}") from None
        if doc["group_id"] != group_id:
            raise UnknownTarget(f"message {message_id} is not in group {group_id}")
        if doc["state"] != MessageState.removed.value:
            doc["state"] = MessageState.removed.value
            doc["body"] = ""  # scrubbed at rest; only the placeholder survives
            self.store.put("chat_message", message_id, doc, version)
            self.events.emit_many(self._member_ids(group_id), EventKind.chat_redaction, {
                "group_id": group_id, "message_id": message_id, "seq": doc["seq"],
            })
        return {"group_id": group_id, "message_id": message_id, "state": "removed"}

    def groups_for_alert(self, alert_id: str, open_only: bool = True) -> list[ChatGroup]:
        where = {"alert_id": alert_id}
        if open_only:
            where["status"] = "open"
        return [from_canon(doc) for doc, _ in self.store.list("chat_group", where=where)]
