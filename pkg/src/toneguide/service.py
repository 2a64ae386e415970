"""HTTP facade for the companion UI.

Single user, single model: uploads are kept in memory, live ratings go to
an append-only CSV the mos module can read back, and fine-tuning runs on a
worker thread against a snapshot of the current checkpoint.  Enhancement
requests always read whichever checkpoint reference is current, so a
running fine-tune never blocks them and the swap is atomic from the
client's point of view.
"""

from __future__ import annotations

import base64
import csv
import datetime
import math
import os
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel

from . import engine, mos, trainer
from .color import ImageBuffer, decode_png_bytes, encode_png_bytes
from .errors import ToneguideError

MAX_UPLOAD_BYTES = 16 * 1024 * 1024
LIVE_SUBJECT_ID = "live"
RATINGS_HEADER = ["subject_id", "image_id", "rating", "score_context", "timestamp"]


@dataclass
class LiveRating:
    image_id: str
    rating: float
    score_context: float
    timestamp: str


@dataclass
class ServiceState:
    checkpoint: trainer.ModelCheckpoint
    model_path: str | None = None
    ratings_path: str | None = None
    images: dict = field(default_factory=dict)
    ratings: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    next_image_id: int = 1
    finetune_thread: threading.Thread | None = None
    finetune_status: dict = field(
        default_factory=lambda: {
            "running": False,
            "epochs_done": 0,
            "epochs_total": 0,
            "completed_runs": 0,
            "error": None,
        }
    )


class EnhanceBody(BaseModel):
    image_id: str
    score: float
    label: int | str | None = engine.AUTO_LABEL
    rounds: int = 1


class RatingBody(BaseModel):
    image_id: str
    rating: float
    score_context: float = 0.0


class FinetuneBody(BaseModel):
    epochs: int = 10
    lr: float = 1e-3


def _append_rating_csv(path: str, row: LiveRating) -> None:
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(RATINGS_HEADER)
        writer.writerow(
            [LIVE_SUBJECT_ID, row.image_id, repr(row.rating), repr(row.score_context), row.timestamp]
        )


def _run_finetune(state: ServiceState, epochs: int, lr: float) -> None:
    try:
        with state.lock:
            checkpoint = state.checkpoint
            ratings = list(state.ratings)
            images = dict(state.images)
        samples = []
        for r in ratings:
            raw = images.get(r.image_id)
            if raw is None:
                continue
            # the rated preview is reproduced deterministically as the target
            target = engine.enhance(
                checkpoint, engine.EnhanceRequest(raw, r.score_context)
            )
            label = (
                engine.resolve_label(checkpoint, raw) if checkpoint.use_label else None
            )
            samples.append(
                trainer.Sample(
                    raw=raw,
                    target=target,
                    score=mos.normalize_direct(r.rating),
                    label=label,
                )
            )

        def progress(done, total, _loss):
            with state.lock:
                state.finetune_status["epochs_done"] = done

        result = trainer.finetune(checkpoint, samples, epochs=epochs, lr=lr, progress_cb=progress)
        with state.lock:
            state.checkpoint = result.checkpoint
            state.finetune_status["completed_runs"] += 1
        if state.model_path:
            trainer.save_checkpoint(result.checkpoint, state.model_path)
    except Exception as exc:  # surfaced via /model, not lost in the thread
        with state.lock:
            state.finetune_status["error"] = f"{type(exc).__name__}: {exc}"
    finally:
        with state.lock:
            state.finetune_status["running"] = False


def create_app(
    checkpoint: trainer.ModelCheckpoint | None = None,
    checkpoint_path: str | None = None,
    ratings_path: str | None = None,
    max_upload_bytes: int = MAX_UPLOAD_BYTES,
) -> FastAPI:
    if checkpoint is None:
        if checkpoint_path is None:
            raise ToneguideError("create_app needs a checkpoint or a checkpoint_path")
        checkpoint = trainer.load_checkpoint(checkpoint_path)
    state = ServiceState(
        checkpoint=checkpoint,
        model_path=checkpoint_path,
        ratings_path=ratings_path,
    )
    app = FastAPI(
        title="toneguide service",
        description="Score-guided image enhancement with live rating capture and fine-tuning.",
        version="1.0.0",
    )
    app.state.toneguide = state

    @app.post("/images")
    async def post_images(request: Request):
        content_type = request.headers.get("content-type", "")
        data: bytes | None = None
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("file") or form.get("image")
            if upload is None:
                raise HTTPException(422, "multipart body needs a 'file' field")
            data = await upload.read()
        elif content_type.startswith("application/json"):
            body = await request.json()
            b64 = body.get("image_b64")
            if not isinstance(b64, str):
                raise HTTPException(422, "JSON body needs an 'image_b64' field")
            try:
                data = base64.b64decode(b64, validate=True)
            except Exception:
                raise HTTPException(415, "image_b64 is not valid base64") from None
        elif content_type.startswith("image/png"):
            data = await request.body()
        else:
            raise HTTPException(415, f"unsupported content type {content_type!r}")
        if len(data) > max_upload_bytes:
            raise HTTPException(413, f"upload exceeds {max_upload_bytes} bytes")
        try:
            image = decode_png_bytes(data)
        except ToneguideError as exc:
            raise HTTPException(415, f"not a decodable PNG: {exc}") from None
        with state.lock:
            image_id = f"img-{state.next_image_id:04d}"
            state.next_image_id += 1
            state.images[image_id] = image
        return {"image_id": image_id, "width": image.width, "height": image.height}

    @app.post("/enhance")
    def post_enhance(body: EnhanceBody):
        if not math.isfinite(body.score):
            raise HTTPException(422, "score must be finite")
        if body.rounds < 1:
            raise HTTPException(422, "rounds must be >= 1")
        if isinstance(body.label, str) and body.label != engine.AUTO_LABEL:
            raise HTTPException(422, f"label must be 1..10, '{engine.AUTO_LABEL}', or null")
        with state.lock:
            ckpt = state.checkpoint
            image = state.images.get(body.image_id)
        if image is None:
            raise HTTPException(404, f"unknown image id {body.image_id!r}")
        try:
            out = engine.enhance(
                ckpt,
                engine.EnhanceRequest(
                    image=image, score=body.score, label=body.label, rounds=body.rounds
                ),
            )
        except ToneguideError as exc:
            raise HTTPException(422, str(exc)) from None
        return Response(content=encode_png_bytes(out), media_type="image/png")

    @app.post("/ratings")
    def post_ratings(body: RatingBody):
        if not (mos.RATING_MIN <= body.rating <= mos.RATING_MAX):
            raise HTTPException(
                422, f"rating must be within [{mos.RATING_MIN}, {mos.RATING_MAX}]"
            )
        with state.lock:
            known = body.image_id in state.images
        if not known:
            raise HTTPException(404, f"unknown image id {body.image_id!r}")
        row = LiveRating(
            image_id=body.image_id,
            rating=body.rating,
            score_context=body.score_context,
            timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        with state.lock:
            state.ratings.append(row)
            count = len(state.ratings)
        if state.ratings_path:
            _append_rating_csv(state.ratings_path, row)
        return {"count": count}

    @app.post("/finetune")
    def post_finetune(body: FinetuneBody):
        if body.epochs < 1:
            raise HTTPException(422, "epochs must be >= 1")
        with state.lock:
            if state.finetune_status["running"]:
                raise HTTPException(409, "a fine-tune is already running")
            if not state.ratings:
                raise HTTPException(422, "no ratings collected yet")
            state.finetune_status.update(
                {"running": True, "epochs_done": 0, "epochs_total": body.epochs, "error": None}
            )
            thread = threading.Thread(
                target=_run_finetune, args=(state, body.epochs, body.lr), daemon=True
            )
            state.finetune_thread = thread
        thread.start()
        return {"started": True, "epochs": body.epochs}

    @app.get("/model")
    def get_model():
        with state.lock:
            ckpt = state.checkpoint
            status = dict(state.finetune_status)
            n_ratings = len(state.ratings)
            n_images = len(state.images)
        return {
            "version": ckpt.version,
            "arch": ckpt.config.to_dict(),
            "score_range": list(ckpt.score_range),
            "label_range": list(ckpt.label_range),
            "metadata": ckpt.metadata,
            "finetune": status,
            "ratings_collected": n_ratings,
            "images_stored": n_images,
        }

    @app.get("/healthz")
    def get_healthz():
        return PlainTextResponse("ok")

    return app
