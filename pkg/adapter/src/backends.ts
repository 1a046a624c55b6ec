// Embedding and pair-scoring backends.
//
// "hash" is a fully deterministic, dependency-free backend: token-hash
// feature vectors for embeddings and a hashed standard-normal draw per
// pair text for scores. It exists so exports and tests run identically
// on any machine with no model downloads; similarity still tracks token
// overlap, which is enough for format- and pipeline-level work.
//
// "transformers" loads real models through @xenova/transformers at
// runtime. The package is an optional install; a clear error is raised
// when it (or the model) is unavailable. Token truncation (max_tokens)
// lives here with the tokenizer, not in the core toolkit.

import { normalizeWhitespace } from "./pairtext.js";
import type { AdapterConfig } from "./types.js";

export interface EmbeddingBackend {
  readonly dim: number;
  embed(texts: string[]): Promise<number[][]>;
}

export interface PairScorer {
  /** One relevance score per [query text, passage text] pair. */
  score(pairs: Array<[string, string]>): Promise<number[]>;
}

// --------------------------------------------------------------------------
// deterministic hash backend

function fnv1a(text: string, seed: number): number {
  let h = (0x811c9dc5 ^ seed) >>> 0;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function xorshift(state: number): number {
  let x = state >>> 0;
  x ^= x << 13;
  x >>>= 0;
  x ^= x >>> 17;
  x ^= x << 5;
  return x >>> 0;
}

function hashUniform(text: string, seed: number): number {
  // strictly inside (0, 1)
  const raw = xorshift(fnv1a(text, seed) || 0x9e3779b9);
  return (raw + 0.5) / 4294967296.0;
}

export class HashEmbeddingBackend implements EmbeddingBackend {
  constructor(readonly dim: number = 384) {
    if (dim < 1) throw new Error("dim must be >= 1");
  }

  async embed(texts: string[]): Promise<number[][]> {
    return texts.map((text) => this.embedOne(text));
  }

  private embedOne(text: string): number[] {
    const vec = new Array<number>(this.dim).fill(0);
    const tokens = normalizeWhitespace(text).toLowerCase().split(" ").filter((t) => t);
    for (const token of tokens) {
      let state = fnv1a(token, 0x5f3759df);
      for (let tap = 0; tap < 4; tap++) {
        state = xorshift(state + tap);
        const index = state % this.dim;
        const sign = (state & 0x80000000) !== 0 ? -1 : 1;
        vec[index] += sign;
      }
    }
    let norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0));
    if (norm === 0) {
      // empty text: a fixed unit vector keeps the file contract intact
      vec[0] = 1;
      norm = 1;
    }
    return vec.map((v) => v / norm);
  }
}

export class HashPairScorer implements PairScorer {
  async score(pairs: Array<[string, string]>): Promise<number[]> {
    return pairs.map(([query, passage]) => {
      // hash the literal pair-text template, so a score is reproducible
      // from the byte-exact pair text alone
      const text = `[CLS] ${query} [SEP] ${passage} [SEP]`;
      const u1 = hashUniform(text, 0x2545f491);
      const u2 = hashUniform(text, 0x8f1bbcdc);
      return Math.sqrt(-2.0 * Math.log(u1)) * Math.cos(2.0 * Math.PI * u2);
    });
  }
}

// --------------------------------------------------------------------------
// transformers.js backend (optional dependency)

async function loadTransformers(): Promise<any> {
  try {
    return await import("@xenova/transformers" as string);
  } catch (err) {
    throw new Error(
      "model backend unavailable: install @xenova/transformers to use " +
        `--backend transformers (${(err as Error).message})`,
    );
  }
}

export class TransformersEmbeddingBackend implements EmbeddingBackend {
  private pipe: any = null;
  constructor(private readonly config: AdapterConfig, readonly dim: number) {}

  private async pipeline(): Promise<any> {
    if (!this.pipe) {
      const tr = await loadTransformers();
      this.pipe = await tr.pipeline("feature-extraction", this.config.embeddingModelName);
    }
    return this.pipe;
  }

  async embed(texts: string[]): Promise<number[][]> {
    const pipe = await this.pipeline();
    const out: number[][] = [];
    for (let start = 0; start < texts.length; start += this.config.batchSize) {
      const batch = texts.slice(start, start + this.config.batchSize);
      const result = await pipe(batch, { pooling: "mean", normalize: true });
      out.push(...(result.tolist() as number[][]));
    }
    return out;
  }
}

export class TransformersPairScorer implements PairScorer {
  private pipe: any = null;
  constructor(private readonly config: AdapterConfig) {}

  private async pipeline(): Promise<any> {
    if (!this.pipe) {
      const tr = await loadTransformers();
      this.pipe = await tr.pipeline("text-classification", this.config.crossEncoderName);
    }
    return this.pipe;
  }

  async score(pairs: Array<[string, string]>): Promise<number[]> {
    const pipe = await this.pipeline();
    const out: number[] = [];
    for (let start = 0; start < pairs.length; start += this.config.batchSize) {
      const batch = pairs.slice(start, start + this.config.batchSize).map(([text, textPair]) => ({
        text,
        text_pair: textPair,
      }));
      const result = await pipe(batch, { top_k: 1 });
      for (const item of result) {
        const first = Array.isArray(item) ? item[0] : item;
        out.push(Number(first.score));
      }
    }
    return out;
  }
}

export function makeEmbeddingBackend(name: string, config: AdapterConfig): EmbeddingBackend {
  if (name === "hash") return new HashEmbeddingBackend(config.dim);
  if (name === "transformers") return new TransformersEmbeddingBackend(config, config.dim);
  throw new Error(`unknown backend ${name} (expected hash or transformers)`);
}

export function makePairScorer(name: string, config: AdapterConfig): PairScorer {
  if (name === "hash") return new HashPairScorer();
  if (name === "transformers") return new TransformersPairScorer(config);
  throw new Error(`unknown backend ${name} (expected hash or transformers)`);
}
