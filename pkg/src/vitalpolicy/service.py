"""HTTP interface over a loaded policy artifact plus simulator sessions.

/predict is stateless and must match in-process prediction exactly; sessions
wrap the simulator's step function for the interactive what-if console.
Sessions live in memory with idle eviction and per-session locking.
"""
from __future__ import annotations

import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .config import ToolConfig
from .ingest import ObservationWindow, featurize
from .labeler import ActionLabel
from .policy import PolicyArtifact, predict_all
from .simulator import step as sim_step


class PredictRequest(BaseModel):
    features: Optional[dict[str, float]] = None
    vector: Optional[list[float]] = None


class SessionRequest(BaseModel):
    seed: int = 0
    age_years: float = 5.0
    ecmo_type: str = "VA"
    on_ecmo: bool = True


class StepRequest(BaseModel):
    actions: dict[str, str] = {}


@dataclass
class Session:
    session_id: str
    rng: np.random.Generator
    age_years: float
    ecmo_type: str
    on_ecmo: bool
    prev_values: dict[str, float]
    cur_values: dict[str, float]
    step_count: int = 0
    history: list[dict] = field(default_factory=list)
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(
    artifact: PolicyArtifact,
    cfg: ToolConfig,
    session_idle_minutes: float = 30.0,
) -> FastAPI:
    app = FastAPI(title="vitalpolicy service", version=__version__)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()
    feature_names = artifact.feature_names
    name_to_idx = {n: i for i, n in enumerate(feature_names)}
    knob_specs = {k.name: k for k in cfg.knobs}

    def _evict_idle():
        deadline = time.monotonic() - session_idle_minutes * 60.0
        with sessions_lock:
            for sid in [s for s, sess in sessions.items() if sess.last_access < deadline]:
                del sessions[sid]

    def _vector_from_request(req: PredictRequest) -> np.ndarray:
        if (req.features is None) == (req.vector is None):
            raise HTTPException(400, detail={
                "error": "provide exactly one of 'features' (by name) or 'vector' (ordered)",
            })
        if req.features is not None:
            missing = sorted(set(feature_names) - set(req.features))
            unknown = sorted(set(req.features) - set(feature_names))
            if missing or unknown:
                raise HTTPException(400, detail={
                    "error": "feature map does not match the artifact's feature names",
                    "missing": missing,
                    "unknown": unknown,
                })
            vec = np.empty(len(feature_names))
            for name, value in req.features.items():
                vec[name_to_idx[name]] = value
        else:
            if len(req.vector) != len(feature_names):
                raise HTTPException(400, detail={
                    "error": f"vector must have {len(feature_names)} entries, got {len(req.vector)}",
                })
            vec = np.asarray(req.vector, dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            bad = [feature_names[i] for i in np.flatnonzero(~np.isfinite(vec))]
            raise HTTPException(422, detail={
                "error": "non-finite feature values", "features": bad,
            })
        return vec

    def _predictions_payload(vec: np.ndarray) -> dict:
        out = {}
        for knob, (label, dist) in predict_all(artifact, vec).items():
            head = artifact.heads[knob]
            p_c = float(head.change_model.predict_proba(vec))
            out[knob] = {
                "action": label.value,
                "p_same": dist.p_same,
                "p_increase": dist.p_increase,
                "p_decrease": dist.p_decrease,
                "tau": head.tau,
                "change_probability": p_c,
            }
        return out

    def _session_state_payload(sess: Session) -> dict:
        windows = [
            ObservationWindow(sess.session_id, sess.step_count + i,
                              dict(vals), {}, sess.ecmo_type, sess.on_ecmo)
            for i, vals in enumerate((sess.prev_values, sess.cur_values))
        ]
        state = featurize(windows, sess.age_years, cfg.registry, cfg.age_table)[0]
        return {
            "step": sess.step_count,
            "values": {k: float(v) for k, v in sess.cur_values.items()},
            "previous_values": {k: float(v) for k, v in sess.prev_values.items()},
            "features": state.as_map(),
            "ecmo_type": sess.ecmo_type,
            "on_ecmo": sess.on_ecmo,
        }

    def _recommendations(state_payload: dict) -> dict:
        vec = np.array([state_payload["features"][n] for n in feature_names])
        return _predictions_payload(vec)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__,
                "knobs": list(artifact.heads)}

    @app.get("/model/info")
    def model_info():
        return {
            "fingerprint": artifact.fingerprint,
            "format_version": artifact.format_version,
            "backend": artifact.backend.to_dict(),
            "feature_names": feature_names,
            "knobs": [
                {
                    "name": knob,
                    "threshold": knob_specs[knob].threshold if knob in knob_specs else None,
                    "tau": head.tau,
                    "fallback_direction": head.fallback_direction.value,
                    "has_direction_model": head.direction_model is not None,
                }
                for knob, head in artifact.heads.items()
            ],
            "registry": [
                {"name": e.name, "unit": e.unit, "category": e.category,
                 "age_normalized": e.age_normalized}
                for e in cfg.registry.entries
            ],
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        vec = _vector_from_request(req)
        return {
            "fingerprint": artifact.fingerprint,
            "per_knob": _predictions_payload(vec),
        }

    @app.post("/session")
    def create_session(req: SessionRequest):
        _evict_idle()
        if req.ecmo_type not in ("VV", "VA"):
            raise HTTPException(400, detail={"error": "ecmo_type must be VV or VA"})
        if not (0.0 <= req.age_years < 18.0) or not math.isfinite(req.age_years):
            raise HTTPException(400, detail={"error": "age_years must lie in [0, 18)"})
        rng = np.random.default_rng(np.random.SeedSequence(int(req.seed)))
        prev = {name: cfg.simulator.dynamics[name].baseline for name in cfg.registry.names}
        cur = sim_step(prev, {}, cfg.simulator, rng, cfg.registry)
        sess = Session(
            session_id=uuid.uuid4().hex,
            rng=rng,
            age_years=float(req.age_years),
            ecmo_type=req.ecmo_type,
            on_ecmo=req.on_ecmo,
            prev_values=prev,
            cur_values=cur,
        )
        with sessions_lock:
            sessions[sess.session_id] = sess
        state = _session_state_payload(sess)
        return {
            "session_id": sess.session_id,
            "state": state,
            "recommendations": _recommendations(state),
        }

    @app.post("/session/{session_id}/step")
    def session_step(session_id: str, req: StepRequest):
        _evict_idle()
        with sessions_lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(404, detail={"error": f"unknown session {session_id!r}"})
        actions: dict[str, ActionLabel] = {}
        for knob, token in req.actions.items():
            if knob not in artifact.heads:
                raise HTTPException(400, detail={"error": f"unknown knob {knob!r}",
                                                 "knobs": list(artifact.heads)})
            try:
                actions[knob] = ActionLabel.from_token(token)
            except ValueError:
                raise HTTPException(400, detail={
                    "error": f"knob {knob!r}: action must be one of INC, DEC, SAME",
                }) from None
        with sess.lock:
            nxt = sim_step(sess.cur_values, actions, cfg.simulator, sess.rng, cfg.registry)
            sess.prev_values = sess.cur_values
            sess.cur_values = nxt
            sess.step_count += 1
            sess.last_access = time.monotonic()
            state = _session_state_payload(sess)
            recommendations = _recommendations(state)
            sess.history.append({
                "step": sess.step_count,
                "chosen_actions": {k: a.value for k, a in actions.items()},
                "state": state,
                "recommendations": recommendations,
            })
        return {
            "session_id": session_id,
            "state": state,
            "recommendations": recommendations,
        }

    @app.get("/session/{session_id}/history")
    def session_history(session_id: str):
        with sessions_lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(404, detail={"error": f"unknown session {session_id!r}"})
        with sess.lock:
            return {"session_id": session_id, "steps": sess.step_count,
                    "history": list(sess.history)}

    return app
