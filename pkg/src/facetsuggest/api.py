"""HTTP wire API over the suggestion service.

Three endpoints: suggest for the current query state, refine to apply a
facet server-side, and a health probe. An optional static directory is
mounted at the root so a compiled UI bundle can be served by the same
process.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .ontology import MemberContext
from .serving import RefinedQuery, StageError, Suggestion, SuggestionService, apply_facet
from .taxonomy import FacetType


class MemberPayload(BaseModel):
    preferred_titles: list[str] = Field(default_factory=list)
    industries: list[str] = Field(default_factory=list)

    def to_context(self) -> MemberContext:
        return MemberContext(
            preferred_titles=tuple(self.preferred_titles), industries=tuple(self.industries)
        )


class AppliedFacetPayload(BaseModel):
    facet_type: str
    value: str
    p_yes: float = 1.0

    def to_suggestion(self) -> Suggestion:
        return Suggestion(facet_type=FacetType(self.facet_type), value=self.value, p_yes=self.p_yes)


class SuggestRequest(BaseModel):
    query: str
    member: MemberPayload | None = None
    applied_facets: list[AppliedFacetPayload] = Field(default_factory=list)


class RefineRequest(BaseModel):
    query: str
    applied_facets: list[AppliedFacetPayload] = Field(default_factory=list)
    facet_type: str
    value: str
    p_yes: float = 1.0


def create_app(service: SuggestionService, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="facetsuggest", version="0.1.0")

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "keywords": len(service.index),
            "embed_dim": service.encoder.embed_dim,
        }

    @app.post("/v1/suggest")
    def suggest(req: SuggestRequest) -> dict:
        member = req.member.to_context() if req.member else None
        try:
            applied = tuple(f.to_suggestion() for f in req.applied_facets)
            response = service.suggest(req.query, member, applied)
        except StageError as exc:
            raise HTTPException(status_code=500, detail={"stage": exc.stage, "error": str(exc)})
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return response.to_json_dict()

    @app.post("/v1/refine")
    def refine(req: RefineRequest) -> dict:
        try:
            state = RefinedQuery(
                base=req.query,
                applied=tuple(f.to_suggestion() for f in req.applied_facets),
            )
            refined = apply_facet(
                state,
                Suggestion(facet_type=FacetType(req.facet_type), value=req.value, p_yes=req.p_yes),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "base": refined.base,
            "applied_facets": [s.to_json_dict() for s in refined.applied],
            "text": refined.text,
        }

    if ui_dir is not None:
        ui_path = Path(ui_dir)
        if ui_path.is_dir():
            app.mount("/", StaticFiles(directory=str(ui_path), html=True), name="ui")

    return app
