"""Record live service payloads as UI test fixtures.

Drives the real HTTP app (pinned tiny models, synthetic two-element
scene) and captures every payload the viewfinder consumes, so the UI
tests replay genuine wire traffic rather than hand-written imitations.

    python3 frontend/scripts/record_fixtures.py
"""

import base64
import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from declutter.imaging import image_to_png_bytes
from declutter.inpaint import Generator
from declutter.scoring import ScoreModel, TinyBackbone
from declutter.segmentation import PlantedShape, SyntheticSegmenter
from declutter.service import ServiceConfig, create_app

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def fnv1a32(data: bytes) -> int:
    h = 0x811C9DC5
    for byte in data:
        h = ((h ^ byte) * 0x01000193) & 0xFFFFFFFF
    return h


def main() -> None:
    import tempfile

    size = 48
    shapes = [
        PlantedShape(row0=8, col0=8, row1=28, col1=28, label=81),
        PlantedShape(row0=0, col0=30, row1=6, col1=40, label=3),
    ]
    with tempfile.TemporaryDirectory() as store:
        app = create_app(
            ServiceConfig(session_store=store, max_iterations=3),
            score_model=ScoreModel(
                TinyBackbone(channels=(4, 8), seed=0),
                input_resolution=32,
                kernel_size=5,
                kernel_variance=1.0,
                seed=0,
            ),
            generator=Generator(
                encoder_channels=(8, 8, 16, 16),
                decoder_channels=(16, 16, 8, 6, 3),
                confidence_hidden=4,
                native_resolution=32,
                seed=0,
            ),
            segmenter=SyntheticSegmenter(shapes=shapes),
        )
        client = TestClient(app)
        rng = np.random.default_rng(99)
        image = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8) / 255.0
        blob = image_to_png_bytes(image)

        session = client.post(
            "/v1/sessions", files={"image": ("scene.png", blob, "image/png")}
        ).json()
        sid = session["id"]

        # make the scene deterministic for the UI: exactly one clutter element
        client.post(f"/v1/sessions/{sid}/overrides", json={"index": 1, "category": "clutter"})
        client.post(f"/v1/sessions/{sid}/overrides", json={"index": 2, "category": "normal"})
        session_after = client.get(f"/v1/sessions/{sid}").json()

        suggestions = {
            str(i): client.get(f"/v1/sessions/{sid}/elements/{i}/suggestions").json()
            for i in (1, 2)
        }
        clean = client.post(f"/v1/sessions/{sid}/clean").json()
        preview = client.get(f"/v1/sessions/{sid}/preview.png").content

        FIXTURES.mkdir(parents=True, exist_ok=True)
        (FIXTURES / "session_two_elements.json").write_text(
            json.dumps(session_after, indent=2)
        )
        (FIXTURES / "suggestions.json").write_text(json.dumps(suggestions, indent=2))
        (FIXTURES / "clean_response.json").write_text(json.dumps(clean, indent=2))
        (FIXTURES / "preview.json").write_text(
            json.dumps(
                {
                    "base64": base64.b64encode(preview).decode(),
                    "fnv1a32_hex": f"{fnv1a32(preview):08x}",
                    "length": len(preview),
                },
                indent=2,
            )
        )
    print(f"recorded fixtures under {FIXTURES}")


if __name__ == "__main__":
    main()
