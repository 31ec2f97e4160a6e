"""HTTP front end over the analysis pipeline.

The state provider is fixed when the app is created (fixture directory or
RPC endpoint) and shared, with caching, by every request.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__
from .bytecode import Selector, SignatureError, selector_of
from .callgraph import AnalysisError
from .dataset import DatasetError, parse_dataset
from .pipeline import EXIT_ERROR, Limits, analyze_target, report_name, run_batch
from .schemas import (
    AnalyzeRequest,
    AnalyzeResponse,
    BatchRequest,
    BatchResponse,
    ErrorDetail,
    Health,
    SelectorRow,
    SelectorsRequest,
    SelectorsResponse,
)
from .state import CachingProvider, StateError, StateProvider
from .taint import ProfileError, TaintConfig, load_profile


def _usage(message: str) -> HTTPException:
    return HTTPException(400, ErrorDetail(kind="usage", message=message).model_dump())


def _profile(name: str) -> TaintConfig:
    try:
        return load_profile(name)
    except ProfileError as exc:
        raise _usage(str(exc)) from None


def create_app(state: StateProvider) -> FastAPI:
    cached = state if isinstance(state, CachingProvider) else CachingProvider(state)
    app = FastAPI(title="flashtaint", version=__version__)

    @app.get("/health", response_model=Health)
    def health() -> Health:
        return Health(version=__version__)

    @app.post("/analyze", response_model=AnalyzeResponse)
    def analyze(req: AnalyzeRequest) -> AnalyzeResponse:
        config = _profile(req.profile)
        selector = Selector.parse(req.selector)
        name = report_name(req.address, selector, req.block)
        try:
            result = analyze_target(
                cached, req.address, selector, req.block, config, req.storage_address,
                Limits(req.max_depth, req.max_nodes),
            )
        except (AnalysisError, StateError) as exc:
            return AnalyzeResponse(status="error", exit_code=EXIT_ERROR, report_name=name, error=str(exc))
        report = result.report
        return AnalyzeResponse(
            status=report.verdict, exit_code=result.exit_code, report_name=name, report=report.to_json()
        )

    @app.post("/batch", response_model=BatchResponse)
    def batch(req: BatchRequest) -> BatchResponse:
        config = _profile(req.profile)
        try:
            records = parse_dataset(req.dataset)
        except DatasetError as exc:
            detail = ErrorDetail(kind="dataset", message=str(exc), line=exc.line)
            raise HTTPException(400, detail.model_dump()) from None
        summary = run_batch(records, cached, config, Limits(req.max_depth, req.max_nodes), req.parallel)
        reports = {o.report_name: o.report.dumps() for o in summary.outcomes if o.report is not None}
        return BatchResponse(
            exit_code=summary.exit_code, summary=summary.to_json(), table=summary.table(), reports=reports
        )

    @app.post("/selectors", response_model=SelectorsResponse)
    def selectors(req: SelectorsRequest) -> SelectorsResponse:
        rows = []
        for sig in req.signatures:
            try:
                rows.append(SelectorRow(signature=sig, selector=selector_of(sig).hex))
            except SignatureError as exc:
                raise _usage(str(exc)) from None
        return SelectorsResponse(selectors=rows)

    return app
