"""Optional UDP transport: one encoded message per datagram.

Not used by the simulator; it exists so the same wire format can be carried
between real hosts.
"""
from __future__ import annotations

import socket
from typing import Optional

from .messages import Message, MessageError, decode, encode

MAX_DATAGRAM = 65507


class UdpEndpoint:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def send(self, msg: Message, addr: tuple[str, int]) -> int:
        data = encode(msg)
        if len(data) > MAX_DATAGRAM:
            raise ValueError(f"encoded message is {len(data)} bytes, too large for one datagram")
        return self.sock.sendto(data, addr)

    def recv(self, timeout: Optional[float] = 1.0) -> tuple[Message, tuple[str, int]]:
        """Block for one datagram; raises ``socket.timeout`` or a MessageError."""
        self.sock.settimeout(timeout)
        data, addr = self.sock.recvfrom(MAX_DATAGRAM)
        return decode(data), addr

    def recv_valid(self, timeout: Optional[float] = 1.0):
        """Like ``recv`` but returns None for undecodable datagrams."""
        try:
            return self.recv(timeout)
        except MessageError:
            return None

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "UdpEndpoint":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
