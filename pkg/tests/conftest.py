import pytest

from coldrank.catalog import Catalog, Item, UserRecord
from coldrank.synthgen import WorldSpec, generate_world


@pytest.fixture
def tiny_catalog() -> Catalog:
    return Catalog([
        Item(id="a", title="Alpha Dawn", genres=("drama",), tags=(("heist", 4),), popularity=5),
        Item(id="b", title="Beta Harbor", genres=("scifi", "thriller"),
             tags=(("space", 9), ("robots", 2)), popularity=9),
        Item(id="c", title="Gamma Winter", genres=("comedy",), tags=(), popularity=1),
    ])


@pytest.fixture
def tiny_users() -> list[UserRecord]:
    return [
        UserRecord(id="u1", profile_text="likes space thrillers", gt_items=frozenset({"b"})),
        UserRecord(id="u2", profile_text="enjoys drama", gt_items=frozenset({"a", "c"})),
    ]


@pytest.fixture(scope="session")
def small_world():
    spec = WorldSpec(catalog_size=400, user_count=60, embed_dim=16, latent_dim=8,
                     alignment=0.8, gt_per_user=8, seed=42)
    return generate_world(spec)
