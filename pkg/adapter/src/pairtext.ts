// Profile and pair-text construction. These strings are a byte-exact
// contract with the core toolkit: both sides must produce identical
// output for the same item/user, which is what the golden-file test
// pins down.

import type { Item } from "./types.js";

// Whitespace set mirroring Python's str.split(): ASCII whitespace,
// the C1 separators, NEL and the Unicode space separators. ﻿ is
// deliberately NOT included (Python does not split on it).
const WS =
  /[\t\n\v\f\r \x1c\x1d\x1e\x1f\x85\xa0\u1680\u2000-\u200a\u2028\u2029\u202f\u205f\u3000]+/gu;

export function normalizeWhitespace(text: string): string {
  return text.split(WS).filter((t) => t.length > 0).join(" ");
}

export function sortTags(tags: Array<[string, number]>): Array<[string, number]> {
  return [...tags].sort((a, b) => {
    if (a[1] !== b[1]) return b[1] - a[1];
    return a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0;
  });
}

export function buildItemProfile(item: Item, maxTags = 10): string {
  if (maxTags < 0) throw new Error("maxTags must be >= 0");
  const parts = [item.title, ...item.genres];
  for (const [tag] of sortTags(item.tags).slice(0, maxTags)) parts.push(tag);
  return normalizeWhitespace(parts.join(" "));
}

export function buildPairText(userProfile: string, item: Item, maxTags = 10): string {
  return `[CLS] ${normalizeWhitespace(userProfile)} [SEP] ${buildItemProfile(item, maxTags)} [SEP]`;
}
