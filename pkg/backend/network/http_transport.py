"""
HTTP transport between clients and organization servers

Frames travel as hex-encoded canonical bytes in JSON bodies; one endpoint per
request kind.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Optional

import requests

from ..crdt.codec import CodecError
from ..protocol.frames import (
    CommitRequest,
    Frame,
    GossipPush,
    ProposeRequest,
    ReadRequest,
    decode_frame,
    encode_frame,
)

logger = logging.getLogger(__name__)

ENDPOINTS = {
    ProposeRequest: "/api/propose",
    CommitRequest: "/api/commit",
    ReadRequest: "/api/read",
    GossipPush: "/api/gossip",
}


def frame_to_hex(frame: Optional[Frame]) -> Optional[str]:
    return encode_frame(frame).hex() if frame is not None else None


def frame_from_hex(value: str) -> Frame:
    try:
        return decode_frame(bytes.fromhex(value))
    except ValueError as e:
        raise CodecError(f"Invalid frame payload: {e}") from e


class HttpTransport:
    """Blocking transport posting frames to organization servers"""

    def __init__(self, peers: Dict[str, str], timeout: float = 10.0,
                 post: Optional[Callable[..., requests.Response]] = None, max_workers: int = 16):
        """
        Initialize the transport

        Args:
            peers: Organization id to base URL
            timeout: Default request timeout in seconds
            post: Replacement for ``requests.post`` (tests route it to in-process apps)
            max_workers: Parallel requests per broadcast
        """
        self.peers = {org: url.rstrip("/") for org, url in peers.items()}
        self.timeout = timeout
        self._post = post or requests.post
        self.max_workers = max_workers

    def request(self, dest: str, frame: Frame, timeout: Optional[float] = None) -> Optional[Frame]:
        """
        Send one frame and return the response frame

        Returns:
            The decoded response, or None if the peer is unknown or unreachable
        """
        base = self.peers.get(dest)
        if base is None:
            logger.warning(f"No address for {dest}")
            return None
        url = f"{base}{ENDPOINTS[type(frame)]}"
        try:
            response = self._post(url, json={"frame": frame_to_hex(frame)}, timeout=timeout or self.timeout)
            response.raise_for_status()
            payload = response.json().get("frame")
            return frame_from_hex(payload) if payload else None
        except (requests.RequestException, ValueError) as e:
            logger.warning(f"Request to {dest} at {url} failed: {e}")
            return None

    def broadcast(self, frames: Dict[str, Frame], timeout: float) -> Dict[str, Frame]:
        """Send frames concurrently; peers that fail or time out are left out"""
        with ThreadPoolExecutor(max_workers=min(self.max_workers, max(1, len(frames)))) as pool:
            futures = {dest: pool.submit(self.request, dest, frame, timeout) for dest, frame in frames.items()}
            results = {dest: future.result() for dest, future in futures.items()}
        return {dest: frame for dest, frame in results.items() if frame is not None}

    def send(self, dest: str, frame: Frame) -> Optional[Frame]:
        return self.request(dest, frame)
