// Readers/writers for the toolkit's interchange files: items CSV, users
// JSONL, candidate-pool JSONL, the embeddings text format and the scores
// JSONL. Scores are written with 6 decimal digits so exports stay
// diffable.

import type { Item, PoolLine, UserRecord } from "./types.js";

/** Minimal RFC 4180 CSV reader (quoted fields, doubled quotes, embedded
 * newlines). Returns rows of raw string cells. */
export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let cell = "";
  let inQuotes = false;
  let i = 0;
  const pushCell = () => {
    row.push(cell);
    cell = "";
  };
  const pushRow = () => {
    pushCell();
    rows.push(row);
    row = [];
  };
  while (i < text.length) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          cell += '"';
          i += 2;
          continue;
        }
        inQuotes = false;
        i += 1;
        continue;
      }
      cell += ch;
      i += 1;
      continue;
    }
    if (ch === '"' && cell === "") {
      inQuotes = true;
      i += 1;
    } else if (ch === ",") {
      pushCell();
      i += 1;
    } else if (ch === "\r" && text[i + 1] === "\n") {
      pushRow();
      i += 2;
    } else if (ch === "\n" || ch === "\r") {
      pushRow();
      i += 1;
    } else {
      cell += ch;
      i += 1;
    }
  }
  if (cell !== "" || row.length > 0) pushRow();
  return rows.filter((r) => !(r.length === 1 && r[0] === ""));
}

const CATALOG_HEADER = ["id", "title", "year", "genres", "tags", "popularity"];

export function parseCatalogCsv(text: string): Item[] {
  const rows = parseCsv(text);
  if (rows.length === 0) throw new Error("catalog CSV is empty");
  const header = rows[0];
  for (const column of CATALOG_HEADER) {
    if (!header.includes(column)) throw new Error(`catalog CSV missing column ${column}`);
  }
  const index = Object.fromEntries(header.map((name, at) => [name, at]));
  const items: Item[] = [];
  const seen = new Set<string>();
  for (let line = 1; line < rows.length; line++) {
    const cells = rows[line];
    const get = (name: string) => cells[index[name]] ?? "";
    const id = get("id");
    if (!id) throw new Error(`catalog CSV line ${line + 1}: empty id`);
    if (seen.has(id)) throw new Error(`catalog CSV line ${line + 1}: duplicate id ${id}`);
    seen.add(id);
    const tags: Array<[string, number]> = [];
    for (const chunk of get("tags").split("|")) {
      if (!chunk) continue;
      const at = chunk.lastIndexOf(":");
      if (at < 0) throw new Error(`catalog CSV line ${line + 1}: malformed tag ${chunk}`);
      const count = Number(chunk.slice(at + 1));
      if (!Number.isFinite(count)) {
        throw new Error(`catalog CSV line ${line + 1}: bad tag count in ${chunk}`);
      }
      tags.push([chunk.slice(0, at), count]);
    }
    items.push({
      id,
      title: get("title"),
      year: get("year") === "" ? null : Number(get("year")),
      genres: get("genres").split("|").filter((g) => g.length > 0),
      tags,
      popularity: get("popularity") === "" ? 0 : Number(get("popularity")),
    });
  }
  return items;
}

export function parseUsersJsonl(text: string): UserRecord[] {
  const users: UserRecord[] = [];
  const seen = new Set<string>();
  text.split("\n").forEach((line, at) => {
    if (!line.trim()) return;
    let record: any;
    try {
      record = JSON.parse(line);
    } catch (err) {
      throw new Error(`users JSONL line ${at + 1}: ${(err as Error).message}`);
    }
    const id = String(record.id ?? "");
    if (!id) throw new Error(`users JSONL line ${at + 1}: missing id`);
    if (seen.has(id)) throw new Error(`users JSONL line ${at + 1}: duplicate id ${id}`);
    seen.add(id);
    users.push({
      id,
      profile_text: String(record.profile_text ?? ""),
      gt_items: (record.gt_items ?? []).map(String),
    });
  });
  return users;
}

export function parsePoolsJsonl(text: string): PoolLine[] {
  const pools: PoolLine[] = [];
  text.split("\n").forEach((line, at) => {
    if (!line.trim()) return;
    let record: any;
    try {
      record = JSON.parse(line);
    } catch (err) {
      throw new Error(`pools JSONL line ${at + 1}: ${(err as Error).message}`);
    }
    if (!record.user_id || !Array.isArray(record.entries)) {
      throw new Error(`pools JSONL line ${at + 1}: expected {user_id, entries, pool_size}`);
    }
    pools.push({
      user_id: String(record.user_id),
      entries: record.entries.map((e: any) => [String(e[0]), Number(e[1])] as [string, number]),
      pool_size: Number(record.pool_size ?? record.entries.length),
    });
  });
  return pools;
}

/** Text embedding format: "dim=<d>" header, then one
 * "<id>\t<v1> <v2> ... <vd>" line per id. */
export function renderEmbeddingsText(ids: string[], vectors: number[][], dim: number): string {
  const lines = [`dim=${dim}`];
  ids.forEach((id, at) => {
    const vec = vectors[at];
    if (vec.length !== dim) throw new Error(`vector for ${id} has length ${vec.length}, want ${dim}`);
    lines.push(`${id}\t${vec.map((v) => v.toString()).join(" ")}`);
  });
  return lines.join("\n") + "\n";
}

export function renderScoresJsonl(rows: Array<[string, string, number]>): string {
  return (
    rows
      .map(
        ([userId, itemId, score]) =>
          `{"user_id": ${JSON.stringify(userId)}, "item_id": ${JSON.stringify(itemId)}, ` +
          `"score": ${score.toFixed(6)}}`,
      )
      .join("\n") + "\n"
  );
}
