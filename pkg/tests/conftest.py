import numpy as np
import pytest

from scribeloop.model import ColumnInfo, Side
from scribeloop.store import AnnotationStore


def register(
    store: AnnotationStore,
    column_id: str = "demo_1r_c0",
    width: int = 200,
    height: int = 300,
    scribe: str = "B",
    manuscript: str = "demo",
    page: int = 1,
    side: Side = Side.RECTO,
    index: int = 0,
) -> ColumnInfo:
    info = ColumnInfo(
        column_id=column_id,
        manuscript=manuscript,
        page_number=page,
        side=side,
        column_index=index,
        width=width,
        height=height,
        scribe=scribe,
    )
    store.register_column(info)
    return info


@pytest.fixture
def store() -> AnnotationStore:
    return AnnotationStore()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
