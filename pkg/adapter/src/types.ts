export interface Item {
  id: string;
  title: string;
  year: number | null;
  genres: string[];
  /** [tag text, frequency], kept sorted by descending frequency then tag text */
  tags: Array<[string, number]>;
  popularity: number;
}

export interface UserRecord {
  id: string;
  profile_text: string;
  gt_items: string[];
}

export interface PoolLine {
  user_id: string;
  entries: Array<[string, number]>;
  pool_size: number;
}

export interface AdapterConfig {
  embeddingModelName: string;
  crossEncoderName: string;
  maxTokens: number;
  batchSize: number;
  dim: number;
}

export const DEFAULT_CONFIG: AdapterConfig = {
  embeddingModelName: "sentence-transformers/all-MiniLM-L6-v2",
  crossEncoderName: "cross-encoder/ms-marco-MiniLM-L-6-v2",
  maxTokens: 128,
  batchSize: 32,
  dim: 384,
};
