#!/usr/bin/env node
// Adapter CLI. Reads the toolkit's catalog/users/pools files and writes
// its embeddings and scores files.
//
//   export-embeddings --catalog items.csv --out item_embeddings.txt
//                     [--users users.jsonl --queries-out user_queries.txt]
//                     [--backend hash|transformers] [--model NAME]
//                     [--dim N] [--batch-size N] [--max-tags N]
//   export-scores     --catalog items.csv --users users.jsonl
//                     --pools pools.jsonl --out scores.jsonl
//                     [--backend hash|transformers] [--cross-encoder NAME]
//                     [--batch-size N] [--max-tokens N] [--max-tags N]
//   pair-texts        --catalog items.csv --users users.jsonl --out pairs.txt
//                     [--max-tags N]

import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname } from "node:path";
import { makeEmbeddingBackend, makePairScorer } from "./backends.js";
import { parseCatalogCsv, parsePoolsJsonl, parseUsersJsonl } from "./formats.js";
import { exportItemEmbeddings, exportQueryVectors, exportScores, renderPairTexts } from "./exporters.js";
import { DEFAULT_CONFIG, type AdapterConfig } from "./types.js";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) throw new Error(`expected a --flag, got ${key}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`flag ${key} needs a value`);
    flags[key.slice(2)] = value;
  }
  return flags;
}

function requireFlag(flags: Flags, name: string): string {
  const value = flags[name];
  if (!value) throw new Error(`--${name} is required`);
  return value;
}

function configFrom(flags: Flags): AdapterConfig {
  const config: AdapterConfig = {
    ...DEFAULT_CONFIG,
    embeddingModelName: flags["model"] ?? DEFAULT_CONFIG.embeddingModelName,
    crossEncoderName: flags["cross-encoder"] ?? DEFAULT_CONFIG.crossEncoderName,
    maxTokens: flags["max-tokens"] ? Number(flags["max-tokens"]) : DEFAULT_CONFIG.maxTokens,
    batchSize: flags["batch-size"] ? Number(flags["batch-size"]) : DEFAULT_CONFIG.batchSize,
    dim: flags["dim"] ? Number(flags["dim"]) : DEFAULT_CONFIG.dim,
  };
  if (config.batchSize < 1) throw new Error("--batch-size must be >= 1");
  if (config.maxTokens < 1) throw new Error("--max-tokens must be >= 1");
  return config;
}

function writeOut(path: string, text: string): void {
  mkdirSync(dirname(path) || ".", { recursive: true });
  writeFileSync(path, text, "utf-8");
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (!command || command === "--help" || command === "-h") {
      console.log("commands: export-embeddings, export-scores, pair-texts");
      return command ? 0 : 1;
    }
    const flags = parseFlags(rest);
    const config = configFrom(flags);
    const maxTags = flags["max-tags"] ? Number(flags["max-tags"]) : 10;
    if (command === "export-embeddings") {
      const items = parseCatalogCsv(readFileSync(requireFlag(flags, "catalog"), "utf-8"));
      const backend = makeEmbeddingBackend(flags["backend"] ?? "hash", config);
      writeOut(requireFlag(flags, "out"), await exportItemEmbeddings(items, backend, maxTags));
      console.log(`wrote ${items.length} item vectors (dim=${backend.dim}) to ${flags["out"]}`);
      if (flags["users"]) {
        const users = parseUsersJsonl(readFileSync(flags["users"], "utf-8"));
        const queriesOut = requireFlag(flags, "queries-out");
        writeOut(queriesOut, await exportQueryVectors(users, backend));
        console.log(`wrote ${users.length} query vectors to ${queriesOut}`);
      }
      return 0;
    }
    if (command === "export-scores") {
      const items = parseCatalogCsv(readFileSync(requireFlag(flags, "catalog"), "utf-8"));
      const users = parseUsersJsonl(readFileSync(requireFlag(flags, "users"), "utf-8"));
      const pools = parsePoolsJsonl(readFileSync(requireFlag(flags, "pools"), "utf-8"));
      const scorer = makePairScorer(flags["backend"] ?? "hash", config);
      const out = requireFlag(flags, "out");
      writeOut(out, await exportScores(items, users, pools, scorer, maxTags));
      const lines = pools.reduce((acc, pool) => acc + pool.entries.length, 0);
      console.log(`wrote ${lines} score lines to ${out}`);
      return 0;
    }
    if (command === "pair-texts") {
      const items = parseCatalogCsv(readFileSync(requireFlag(flags, "catalog"), "utf-8"));
      const users = parseUsersJsonl(readFileSync(requireFlag(flags, "users"), "utf-8"));
      const out = requireFlag(flags, "out");
      writeOut(out, renderPairTexts(items, users, maxTags));
      console.log(`wrote ${items.length * users.length} pair texts to ${out}`);
      return 0;
    }
    throw new Error(`unknown command ${command}`);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
