"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, field_validator

from .bytecode import Selector
from .callgraph import DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES
from .state import normalize_address


class AnalyzeRequest(BaseModel):
    address: str
    storage_address: str | None = None
    selector: str
    block: int = Field(gt=0)
    profile: str = "expanded"
    max_depth: int = Field(DEFAULT_MAX_DEPTH, ge=0)
    max_nodes: int = Field(DEFAULT_MAX_NODES, ge=1)

    @field_validator("address", "storage_address")
    @classmethod
    def _address(cls, v: str | None) -> str | None:
        return None if v is None else normalize_address(v)

    @field_validator("selector")
    @classmethod
    def _selector(cls, v: str) -> str:
        return Selector.parse(v).hex


class AnalyzeResponse(BaseModel):
    status: Literal["vulnerable", "not_detected", "error"]
    exit_code: int
    report_name: str
    report: dict | None = None
    error: str | None = None


class BatchRequest(BaseModel):
    dataset: str
    profile: str = "expanded"
    parallel: int = Field(1, ge=1, le=64)
    max_depth: int = Field(DEFAULT_MAX_DEPTH, ge=0)
    max_nodes: int = Field(DEFAULT_MAX_NODES, ge=1)


class BatchResponse(BaseModel):
    exit_code: int
    summary: dict
    table: str
    reports: dict[str, str]


class SelectorsRequest(BaseModel):
    signatures: list[str]


class SelectorRow(BaseModel):
    signature: str
    selector: str


class SelectorsResponse(BaseModel):
    selectors: list[SelectorRow]


class ErrorDetail(BaseModel):
    kind: Literal["usage", "dataset"]
    message: str
    line: int | None = None


class Health(BaseModel):
    status: Literal["ok"] = "ok"
    version: str
