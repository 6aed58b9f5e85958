"""Thin HTTP client for the tracking/evaluation service.

The CLI talks to the service exclusively through this client. Without a
server URL it mounts the FastAPI app in-process over an ASGI transport, so
batch runs need no running server; with `--server` the same calls go over
the network.
"""

from __future__ import annotations

import base64

import httpx

from .errors import AnmsVoError


class ServiceError(AnmsVoError):
    """Non-2xx response from the service."""

    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(f"service error {status_code}: {detail}")


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 300.0):
        if base_url is None:
            # sync bridge into the ASGI app; no server process involved
            from starlette.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())
        else:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, method: str, url: str, **kwargs) -> dict:
        response = self._client.request(method, url, **kwargs)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(response.status_code, str(detail))
        return response.json()

    def health(self) -> dict:
        return self._request("GET", "/health")

    def anms_select(self, spft_bytes: bytes, n: int) -> tuple[bytes, dict]:
        payload = {"spft_b64": base64.b64encode(spft_bytes).decode("ascii"), "n": n}
        body = self._request("POST", "/anms/select", json=payload)
        return base64.b64decode(body["spft_b64"]), body["stats"]

    def evaluate(
        self,
        est_text: str,
        gt_text: str,
        mode: str,
        est_format: str = "kitti",
        gt_format: str = "kitti",
        align: str = "rigid",
        delta: int = 1,
        plot: bool = False,
    ) -> dict:
        return self._request(
            "POST",
            "/eval",
            json={
                "est_text": est_text,
                "gt_text": gt_text,
                "mode": mode,
                "est_format": est_format,
                "gt_format": gt_format,
                "align": align,
                "delta": delta,
                "plot": plot,
            },
        )

    def create_session(self, config: dict | None = None, rig: dict | None = None,
                       calib_text: str | None = None, seed: int = 0) -> str:
        payload: dict = {"seed": seed}
        if config:
            payload["config"] = config
        if rig is not None:
            payload["rig"] = rig
        if calib_text is not None:
            payload["calib_text"] = calib_text
        return self._request("POST", "/sessions", json=payload)["session_id"]

    def push_frame(self, session_id: str, frame_index: int,
                   left_spft: bytes, right_spft: bytes) -> dict:
        return self._request(
            "POST",
            f"/sessions/{session_id}/frames",
            json={
                "frame_index": frame_index,
                "left_spft_b64": base64.b64encode(left_spft).decode("ascii"),
                "right_spft_b64": base64.b64encode(right_spft).decode("ascii"),
            },
        )

    def session_trajectory(self, session_id: str, fmt: str = "kitti") -> dict:
        return self._request(
            "GET", f"/sessions/{session_id}/trajectory", params={"format": fmt}
        )

    def session_summary(self, session_id: str) -> dict:
        return self._request("GET", f"/sessions/{session_id}")

    def delete_session(self, session_id: str) -> None:
        self._request("DELETE", f"/sessions/{session_id}")
