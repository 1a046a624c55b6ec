#!/usr/bin/env python3
"""Regenerate the adapter's golden fixtures from the core toolkit.

The fixtures pin the byte-exact pair-text contract: a 100-item catalog, a
handful of users with whitespace edge cases, and the expected
"<user_id>\t<item_id>\t<pair text>" lines computed by the core
implementation. Run from the repo root after `pip install -e .`:

    python3 adapter/scripts/make_golden_fixtures.py
"""

from pathlib import Path

from coldrank.catalog import UserRecord, build_pair_text, save_catalog, save_users
from coldrank.synthgen import WorldSpec, generate_world

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def main() -> None:
    world = generate_world(WorldSpec(catalog_size=100, user_count=2, embed_dim=8,
                                     latent_dim=4, gt_per_user=5, seed=20260810))
    users = list(world.users[:2])
    users.append(UserRecord(id="uedge0", profile_text="  spaced\t\tout   profile \n lines ",
                            gt_items=frozenset()))
    users.append(UserRecord(id="uedge1", profile_text="", gt_items=frozenset()))
    users.append(UserRecord(id="uedge2",
                            profile_text='quoted "taste", commas, and | pipes',
                            gt_items=frozenset()))

    FIXTURES.mkdir(parents=True, exist_ok=True)
    save_catalog(world.catalog, FIXTURES / "golden_items.csv")
    save_users(users, FIXTURES / "golden_users.jsonl")

    lines = []
    for user in users:
        for item_id in world.catalog.item_ids:
            pair = build_pair_text(user.profile_text, world.catalog[item_id])
            lines.append(f"{user.id}\t{item_id}\t{pair}")
    (FIXTURES / "golden_pairs.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote fixtures for {len(users)} users x {world.catalog.size} items -> {FIXTURES}")


if __name__ == "__main__":
    main()
