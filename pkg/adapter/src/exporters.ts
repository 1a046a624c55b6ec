import type { EmbeddingBackend, PairScorer } from "./backends.js";
import { renderEmbeddingsText, renderScoresJsonl } from "./formats.js";
import { buildItemProfile, buildPairText, normalizeWhitespace } from "./pairtext.js";
import type { Item, PoolLine, UserRecord } from "./types.js";

export async function exportItemEmbeddings(
  items: Item[],
  backend: EmbeddingBackend,
  maxTags = 10,
): Promise<string> {
  const texts = items.map((item) => buildItemProfile(item, maxTags));
  const vectors = await backend.embed(texts);
  return renderEmbeddingsText(items.map((i) => i.id), vectors, backend.dim);
}

/** Query vectors come from encoding each user's profile text directly
 * (the "profile-text encoding" mode); they share the item vector space. */
export async function exportQueryVectors(
  users: UserRecord[],
  backend: EmbeddingBackend,
): Promise<string> {
  const texts = users.map((user) => normalizeWhitespace(user.profile_text));
  const vectors = await backend.embed(texts);
  return renderEmbeddingsText(users.map((u) => u.id), vectors, backend.dim);
}

export async function exportScores(
  items: Item[],
  users: UserRecord[],
  pools: PoolLine[],
  scorer: PairScorer,
  maxTags = 10,
): Promise<string> {
  const itemById = new Map(items.map((item) => [item.id, item]));
  const userById = new Map(users.map((user) => [user.id, user]));
  const keys: Array<[string, string]> = [];
  const pairs: Array<[string, string]> = [];
  for (const pool of pools) {
    const user = userById.get(pool.user_id);
    if (!user) throw new Error(`pool references unknown user ${pool.user_id}`);
    const query = normalizeWhitespace(user.profile_text);
    for (const [itemId] of pool.entries) {
      const item = itemById.get(itemId);
      if (!item) {
        throw new Error(`pool for user ${pool.user_id} references unknown item ${itemId}`);
      }
      keys.push([pool.user_id, itemId]);
      pairs.push([query, buildItemProfile(item, maxTags)]);
    }
  }
  const scores = await scorer.score(pairs);
  return renderScoresJsonl(keys.map(([userId, itemId], at) => [userId, itemId, scores[at]]));
}

/** One "<user_id>\t<item_id>\t<pair text>" line per (user, item), in
 * input order; the cross-component golden-file contract. */
export function renderPairTexts(items: Item[], users: UserRecord[], maxTags = 10): string {
  const lines: string[] = [];
  for (const user of users) {
    for (const item of items) {
      lines.push(`${user.id}\t${item.id}\t${buildPairText(user.profile_text, item, maxTags)}`);
    }
  }
  return lines.join("\n") + "\n";
}
