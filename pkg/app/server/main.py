from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field
from typing import Dict, List
import logging
import os

from app.core import Expression
from app.errors import StructuralError
from app.tools.embedder import embed_hash

logger = logging.getLogger(__name__)

app = FastAPI(title="RESMatch Text Encoder", version="0.1.0")

_DIMENSION = int(os.getenv("RESMATCH_ENCODER_DIM", "256"))


class EmbedRequest(BaseModel):
    text: str = Field(..., min_length=1, max_length=1000)


class EmbedResponse(BaseModel):
    embedding: List[float]


@app.get("/health")
def health() -> Dict[str, str]:
    return {"status": "ok", "dimension": str(_DIMENSION)}


@app.post("/embed", response_model=EmbedResponse)
def embed(payload: EmbedRequest) -> EmbedResponse:
    """Hashed bag-of-words encoder; swap in a transformer encoder behind the same contract."""
    try:
        expression = Expression(payload.text)
    except StructuralError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return EmbedResponse(embedding=embed_hash(expression, _DIMENSION).tolist())
