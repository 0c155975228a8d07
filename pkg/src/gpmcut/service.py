"""HTTP service: stack ingestion, stroke sessions, segmentation, export.

Endpoints (JSON unless noted):

    POST /v1/stacks                      multipart manifest + files -> {stack_id}
    GET  /v1/stacks/{id}                 manifest summary
    PUT  /v1/stacks/{id}/strokes         {expected_version, base_index, strokes[]} -> {version}
    GET  /v1/stacks/{id}/segmentation    indexed PNG + X-GPM-Energy header
    GET  /v1/stacks/{id}/preview         composite PNG
    POST /v1/stacks/{id}/export          composite bundle -> {path}
    GET  /v1/stacks/{id}/metrics         metrics JSON (?blended=true for
                                         gradient-domain blending first)

Stroke updates are optimistic-concurrency guarded: the client sends the
version it last saw and gets 409 on a stale write. Identical stack +
strokes + config always produce byte-identical PNG responses.
"""

from __future__ import annotations

import json

from fastapi import Body, FastAPI, HTTPException, Request, Response

from .compositor import label_map_hash, pixel_composite
from .config import EngineConfig
from .errors import DataError
from .labelpng import encode_label_png, encode_rgb_png
from .metrics import metrics_report
from .pipeline import segment
from .poisson import poisson_blend
from .store import StackStore, strokes_from_json, strokes_to_json

ENERGY_HEADER = "X-GPM-Energy"


def _as_bool(raw: str | None) -> bool:
    if raw is None:
        return False
    return raw.strip().lower() in ("1", "true", "yes", "on")


def create_app(config: EngineConfig | None = None) -> FastAPI:
    config = config or EngineConfig()
    app = FastAPI(title="gpmcut", version="0.1.0")
    store = StackStore(config.data_dir)
    app.state.config = config
    app.state.store = store
    # label maps per (stack_id, session version); rebuilt on demand
    seg_cache: dict = {}

    def get_stack_or_404(stack_id: str):
        try:
            return store.get_stack(stack_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown stack {stack_id!r}")

    def segmentation_for(stack_id: str, version: int):
        """Label map + energy for a session version, cached per version."""
        key = (stack_id, version)
        hit = seg_cache.get(key)
        if hit is not None:
            return hit
        stack = get_stack_or_404(stack_id)
        strokes = store.session_strokes(stack_id)
        selection = config.selection()
        grids = store.reduced_grids(stack_id, selection)
        result = segment(stack, strokes, selection=selection,
                         params=config.params(), reduced_grids=grids)
        seg_cache[key] = result
        return result

    def current_version(stack_id: str) -> int:
        return int(store.get_session(stack_id)["version"])

    def resolve_version(stack_id: str, raw: str | None) -> int:
        """Version query parameter: absent means current, stale means 409."""
        current = current_version(stack_id)
        if raw is None or raw == "":
            return current
        try:
            requested = int(raw)
        except ValueError:
            raise HTTPException(status_code=400, detail="version must be an integer")
        if requested != current:
            raise HTTPException(
                status_code=409,
                detail=f"stale version {requested}, current is {current}",
            )
        return requested

    @app.exception_handler(DataError)
    async def on_data_error(request: Request, exc: DataError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    # -- ingestion -------------------------------------------------------
    @app.post("/v1/stacks")
    async def create_stack(request: Request):
        form = await request.form()
        manifest_part = form.get("manifest")
        if manifest_part is None:
            raise HTTPException(status_code=400, detail="missing 'manifest' part")
        if hasattr(manifest_part, "read"):
            manifest_bytes = await manifest_part.read()
        else:
            manifest_bytes = str(manifest_part).encode()
        files = {}
        for key, value in form.multi_items():
            if key == "manifest" or not hasattr(value, "read"):
                continue
            rel = value.filename or key
            files[rel] = await value.read()
        try:
            stack_id = store.ingest_bytes(manifest_bytes, files)
        except json.JSONDecodeError as exc:
            raise HTTPException(status_code=400, detail=f"manifest is not JSON: {exc}")
        return {"stack_id": stack_id}

    # -- summary ---------------------------------------------------------
    @app.get("/v1/stacks/{stack_id}")
    def stack_summary(stack_id: str):
        stack = get_stack_or_404(stack_id)
        man = stack.manifest
        session = store.get_session(stack_id)
        return {
            "stack_id": stack_id,
            "n_images": man.n_images,
            "width": man.width,
            "height": man.height,
            "images": list(man.images),
            "layers": [
                {
                    "layer_id": rec.layer_id,
                    "role": rec.role,
                    "feat_width": rec.feat_width,
                    "feat_height": rec.feat_height,
                    "heads": rec.heads,
                    "dim": rec.dim,
                }
                for rec in man.layers
            ],
            "timesteps": list(man.timesteps),
            "prompts": list(man.prompts),
            "seeds": list(man.seeds),
            "version": int(session["version"]),
            "base_index": int(session["base_index"]),
            "n_strokes": len(session["strokes"]),
        }

    # -- strokes ----------------------------------------------------------
    @app.put("/v1/stacks/{stack_id}/strokes")
    def put_strokes(stack_id: str, payload: dict = Body(...)):
        stack = get_stack_or_404(stack_id)
        man = stack.manifest
        if "expected_version" not in payload:
            raise HTTPException(status_code=400, detail="missing expected_version")
        try:
            expected = int(payload["expected_version"])
        except (TypeError, ValueError):
            raise HTTPException(status_code=400,
                                detail="expected_version must be an integer")
        with store.lock(stack_id):
            session = store.get_session(stack_id)
            if expected != int(session["version"]):
                raise HTTPException(
                    status_code=409,
                    detail=f"expected_version {expected} is stale, "
                           f"current is {session['version']}",
                )
            try:
                strokes = strokes_from_json(payload, man.n_images,
                                            man.width, man.height)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            new_version = int(session["version"]) + 1
            doc = strokes_to_json(strokes)
            doc["version"] = new_version
            store.put_session(stack_id, doc)
        return {"version": new_version}

    # -- segmentation ------------------------------------------------------
    @app.get("/v1/stacks/{stack_id}/segmentation")
    def get_segmentation(stack_id: str, version: str | None = None):
        resolved = resolve_version(stack_id, version)
        result = segmentation_for(stack_id, resolved)
        png = encode_label_png(result.label_map.labels)
        headers = {
            ENERGY_HEADER: repr(result.label_map.energy),
            "X-GPM-Version": str(resolved),
            "Cache-Control": "no-store",
        }
        return Response(content=png, media_type="image/png", headers=headers)

    # -- preview ------------------------------------------------------------
    @app.get("/v1/stacks/{stack_id}/preview")
    def get_preview(stack_id: str, version: str | None = None):
        resolved = resolve_version(stack_id, version)
        stack = get_stack_or_404(stack_id)
        result = segmentation_for(stack_id, resolved)
        composite = pixel_composite(stack, result.label_map.labels)
        png = encode_rgb_png(composite.image)
        return Response(content=png, media_type="image/png",
                        headers={"X-GPM-Version": str(resolved)})

    # -- export --------------------------------------------------------------
    @app.post("/v1/stacks/{stack_id}/export")
    def post_export(stack_id: str, version: str | None = None):
        resolved = resolve_version(stack_id, version)
        stack = get_stack_or_404(stack_id)
        result = segmentation_for(stack_id, resolved)
        session = store.get_session(stack_id)
        out_dir = store.export_dir(stack_id, resolved)
        params = config.params()
        bundle = stack_export(stack, result, out_dir,
                              base_index=int(session["base_index"]),
                              stack_id=stack_id,
                              params=params,
                              manifest_path=str(store.manifest_path(stack_id)))
        return {
            "path": str(bundle),
            "stack_id": stack_id,
            "version": resolved,
            "label_hash": label_map_hash(result.label_map.labels),
        }

    # -- metrics ---------------------------------------------------------------
    @app.get("/v1/stacks/{stack_id}/metrics")
    def get_metrics(stack_id: str, version: str | None = None,
                    blended: str | None = None):
        resolved = resolve_version(stack_id, version)
        stack = get_stack_or_404(stack_id)
        result = segmentation_for(stack_id, resolved)
        labels = result.label_map.labels
        composite = pixel_composite(stack, labels)
        use_blend = _as_bool(blended)
        if use_blend:
            session = store.get_session(stack_id)
            image = poisson_blend(composite, stack,
                                  base_index=int(session["base_index"]))
        else:
            image = composite.image
        report = metrics_report(image, stack.images, composite.fullres_labels)
        report["stack_id"] = stack_id
        report["version"] = resolved
        report["blended"] = use_blend
        report["energy"] = result.label_map.energy
        return report

    return app


def stack_export(stack, result, out_dir, base_index, stack_id, params,
                 manifest_path):
    from .compositor import export_bundle
    from .energy import GraphCutParams

    if isinstance(params, GraphCutParams):
        params = {
            "constraint_cost": params.constraint_cost,
            "smoothness": params.smoothness,
            "sigma": params.sigma,
        }
    return export_bundle(stack, result.label_map.labels, out_dir,
                         base_index=base_index, stack_id=stack_id,
                         params=params, manifest_path=manifest_path)


def serve(config: EngineConfig, addr: str = "127.0.0.1:8000") -> None:
    """Run the HTTP service on host:port (blocking)."""
    import uvicorn

    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise DataError(f"bad address {addr!r}, expected host:port")
    uvicorn.run(create_app(config), host=host, port=int(port), log_level="warning")
