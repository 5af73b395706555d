"""Minimal server-side WebSocket (RFC 6455) support for the browser console.

Text frames only, client-to-server frames masked per the RFC, ping/pong
answered, no extensions. Enough for a loopback telemetry console without
pulling in a dependency.
"""

from __future__ import annotations

import base64
import hashlib
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class WebSocketError(ConnectionError):
    pass


def perform_handshake(sock) -> None:
    """Read the HTTP upgrade request and answer with the accept key."""
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("connection closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise WebSocketError("oversized handshake request")
    headers = {}
    for line in data.split(b"\r\n")[1:]:
        if b":" in line:
            k, v = line.split(b":", 1)
            headers[k.strip().lower().decode()] = v.strip().decode()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise WebSocketError("not a websocket upgrade request")
    accept = base64.b64encode(
        hashlib.sha1((key + _GUID).encode()).digest()
    ).decode()
    sock.sendall(
        (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
        ).encode()
    )


def client_handshake(sock, host: str, path: str = "/") -> None:
    """Open a client-side connection (used by tests; browsers do their own)."""
    key = base64.b64encode(b"safeteleop-test!").decode()
    sock.sendall(
        (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {host}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        ).encode()
    )
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("connection closed during handshake")
        data += chunk
    if b"101" not in data.split(b"\r\n", 1)[0]:
        raise WebSocketError("upgrade refused")
    expect = base64.b64encode(hashlib.sha1((key + _GUID).encode()).digest())
    if expect not in data:
        raise WebSocketError("bad accept key")


def send_text(sock, text: str) -> None:
    payload = text.encode()
    n = len(payload)
    if n < 126:
        head = struct.pack("!BB", 0x81, n)
    elif n < 65536:
        head = struct.pack("!BBH", 0x81, 126, n)
    else:
        head = struct.pack("!BBQ", 0x81, 127, n)
    sock.sendall(head + payload)


def _recv_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WebSocketError("connection closed mid-frame")
        buf += chunk
    return buf


def recv_text(sock) -> str | None:
    """Next text message, answering pings; None once the peer closes."""
    while True:
        b1, b2 = _recv_exact(sock, 2)
        opcode = b1 & 0x0F
        masked = bool(b2 & 0x80)
        length = b2 & 0x7F
        if length == 126:
            (length,) = struct.unpack("!H", _recv_exact(sock, 2))
        elif length == 127:
            (length,) = struct.unpack("!Q", _recv_exact(sock, 8))
        mask = _recv_exact(sock, 4) if masked else b"\x00" * 4
        payload = bytearray(_recv_exact(sock, length))
        if masked:
            for i in range(length):
                payload[i] ^= mask[i % 4]
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong
            n = len(payload)
            sock.sendall(struct.pack("!BB", 0x8A, n) + bytes(payload))
            continue
        if opcode in (0x1, 0x2):
            return payload.decode()
        # continuation/pong frames: ignore
