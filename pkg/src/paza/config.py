"""Configuration resolution: CLI flags > environment > config file > defaults."""

from __future__ import annotations

import json
import os
from typing import Optional

from .gateway import GatewayConfig
from .pipeline import PipelineConfig
from .prefilter import PrefilterConfig

# PAZA_* environment variables and where they land.
_ENV_PREFILTER = {
    "PAZA_TAU_D": ("tau_d_s", float),
    "PAZA_RHO": ("rho", float),
    "PAZA_THETA_H": ("theta_h", float),
    "PAZA_TAU_C": ("tau_c_s", float),
    "PAZA_K": ("clip_frames_k", int),
    "PAZA_T": ("buffer_horizon_t_s", float),
}
_ENV_TOP = {
    "PAZA_RETENTION_H": ("retention_h", float),
}


def load_pipeline_config(
    config_file: Optional[str] = None,
    env: Optional[dict] = None,
    prefilter_overrides: Optional[dict] = None,
    gateway_overrides: Optional[dict] = None,
    top_overrides: Optional[dict] = None,
) -> PipelineConfig:
    env = dict(os.environ) if env is None else env

    file_cfg: dict = {}
    if config_file:
        with open(config_file, encoding="utf-8") as fh:
            file_cfg = json.load(fh)

    pf = dict(file_cfg.get("prefilter", {}))
    gw = dict(file_cfg.get("gateway", {}))
    top = {k: v for k, v in file_cfg.items() if k not in ("prefilter", "gateway")}

    if "VLM_API_URL" in env:
        gw["api_url"] = env["VLM_API_URL"]
    if "VLM_MODEL_NAME" in env:
        gw["model_name"] = env["VLM_MODEL_NAME"]
    if "VLM_API_KEY" in env:
        gw["api_key"] = env["VLM_API_KEY"]
    if "PAZA_RATE_LIMIT" in env:
        limit = int(env["PAZA_RATE_LIMIT"])
        pf["rate_limit_per_min"] = limit
        gw["rate_limit_per_min"] = limit
    for var, (name, cast) in _ENV_PREFILTER.items():
        if var in env:
            pf[name] = cast(env[var])
    for var, (name, cast) in _ENV_TOP.items():
        if var in env:
            top[name] = cast(env[var])

    pf.update(prefilter_overrides or {})
    gw.update(gateway_overrides or {})
    top.update(top_overrides or {})
    if "rate_limit_per_min" in pf and "rate_limit_per_min" not in gw:
        gw["rate_limit_per_min"] = pf["rate_limit_per_min"]

    return PipelineConfig(
        prefilter=PrefilterConfig(**pf), gateway=GatewayConfig(**gw), **top
    )
