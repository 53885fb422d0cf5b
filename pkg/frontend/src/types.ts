/** Payload shapes of the planning service's JSON API (mirrored 1:1). */

export interface CategoryEstimate {
  name: string;
  weight: number;
  theta: number | null;
  alpha: number[];
  samples: number;
  positives: number;
  posterior_mean: number;
  empirical: number | null;
  interval: { lower: number; upper: number };
}

export interface SessionView {
  id: string;
  n: number;
  budget: number;
  eta: number;
  theta0: number | null;
  categories: CategoryEstimate[];
  overall: { r_hat: number | null; r_hat_posterior: number };
  state_hash?: string;
  batches?: BatchEntry[][];
}

export interface BatchEntry {
  category: string;
  samples: number;
  positives: number;
}

export interface RecommendationCategory {
  name: string;
  tau: number;
  tau_int: number;
  u: number;
  T: number;
  theta: number | null;
  binding: boolean;
}

export interface Recommendation {
  b: number;
  lam: number;
  overall_term: number;
  binding_overall: boolean;
  categories: RecommendationCategory[];
}

export interface WhatIfResponse {
  current: Recommendation;
  hypothetical: Recommendation;
}

export interface CreateSessionRequest {
  budget: number;
  name?: string;
  eta?: number;
  theta0?: number;
  categories: { name: string; weight: number; theta?: number }[];
}

export interface WhatIfRequest {
  b: number;
  theta?: Record<string, number>;
  theta0?: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string | null;
}
