/** The client is a pure JSON mover: these tests replay recorded fixtures
 * through a mock fetch and pin methods, paths, and error mapping. */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ApiError, ApsClient, type FetchLike } from "../src/client.js";
import type { Recommendation, SessionView, WhatIfResponse } from "../src/types.js";

function fixture<T>(name: string): T {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

interface Call {
  url: string;
  method: string;
  body?: string;
}

function mockFetch(status: number, payload: unknown, calls: Call[]): FetchLike {
  return async (url, init) => {
    calls.push({ url, method: init?.method ?? "GET", body: init?.body });
    return { status, json: async () => payload };
  };
}

describe("ApsClient", () => {
  it("fetches recommendations with the batch size in the query", async () => {
    const calls: Call[] = [];
    const rec = fixture<Recommendation>("recommendation.json");
    const client = new ApsClient("http://svc", mockFetch(200, rec, calls));
    const got = await client.getRecommendation("abc", 120);
    expect(got).toEqual(rec);
    expect(calls).toEqual([
      { url: "http://svc/sessions/abc/recommendation?b=120", method: "GET", body: undefined },
    ]);
  });

  it("posts batches verbatim", async () => {
    const calls: Call[] = [];
    const view = fixture<SessionView>("after_batch.json");
    const client = new ApsClient("http://svc", mockFetch(200, view, calls));
    const counts = [{ category: "urban", samples: 150, positives: 9 }];
    await client.recordBatch("abc", counts);
    expect(calls[0]!.method).toBe("POST");
    expect(calls[0]!.url).toBe("http://svc/sessions/abc/batches");
    expect(JSON.parse(calls[0]!.body!)).toEqual({ counts });
  });

  it("what-if round-trips both scenarios without touching the numbers", async () => {
    const calls: Call[] = [];
    const res = fixture<WhatIfResponse>("whatif_edit.json");
    const client = new ApsClient("http://svc", mockFetch(200, res, calls));
    const got = await client.whatIf("abc", { b: 120, theta: { rural: 0.0001 } });
    expect(got).toEqual(res);
    expect(JSON.parse(calls[0]!.body!)).toEqual({ b: 120, theta: { rural: 0.0001 } });
  });

  it("maps structured service errors onto ApiError with the field", async () => {
    const body = fixture<{ code: string; message: string; field?: string }>(
      "error_unknown_category.json",
    );
    const client = new ApsClient("http://svc", mockFetch(422, body, []));
    const err = await client
      .whatIf("abc", { b: 120, theta: { nowhere: 0.1 } })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).code).toBe("validation");
    expect((err as ApiError).field).toBe("theta");
    expect((err as ApiError).status).toBe(422);
  });

  it("sends the bearer token when configured", async () => {
    const calls: Call[] = [];
    const fetchSpy: FetchLike = async (url, init) => {
      calls.push({ url, method: init?.method ?? "GET" });
      expect(init?.headers?.authorization).toBe("Bearer sekrit");
      return { status: 200, json: async () => fixture("session_view.json") };
    };
    const client = new ApsClient("http://svc", fetchSpy, "sekrit");
    await client.getSession("abc");
    expect(calls).toHaveLength(1);
  });
});
