import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, PasticheClient } from "../src/api.js";

type FetchArgs = { url: string; init?: RequestInit };

function mockFetch(response: Response): FetchArgs[] {
  const calls: FetchArgs[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      calls.push({ url, init });
      return response;
    }),
  );
  return calls;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("PasticheClient", () => {
  it("fetches the style palette", async () => {
    const calls = mockFetch(
      jsonResponse({ styles: ["A", "B"], per_style_parameters: 3206, loss_caches: ["A"] }),
    );
    const client = new PasticheClient("http://api.test");
    const info = await client.styles();
    expect(calls[0].url).toBe("http://api.test/api/styles");
    expect(info.styles).toEqual(["A", "B"]);
    expect(info.per_style_parameters).toBe(3206);
  });

  it("strips a trailing slash from the base url", async () => {
    const calls = mockFetch(jsonResponse({ styles: [], per_style_parameters: 0, loss_caches: [] }));
    await new PasticheClient("http://api.test/").styles();
    expect(calls[0].url).toBe("http://api.test/api/styles");
  });

  it("uploads raw bytes and returns the content id", async () => {
    const calls = mockFetch(jsonResponse({ content_id: "ab".repeat(32), width: 32, height: 32 }));
    const client = new PasticheClient();
    const data = new Blob([new Uint8Array([1, 2, 3])]);
    const info = await client.uploadContent(data);
    expect(calls[0].url).toBe("/api/content");
    expect(calls[0].init?.method).toBe("POST");
    expect(calls[0].init?.body).toBe(data);
    expect(info.content_id).toBe("ab".repeat(32));
  });

  it("sends the exact weight map as JSON and resolves to a blob", async () => {
    const png = new Response(new Blob([new Uint8Array([137, 80, 78, 71])]), {
      status: 200,
      headers: { "content-type": "image/png" },
    });
    const calls = mockFetch(png);
    const client = new PasticheClient();
    const weights = { A: 0.334, B: 0.333, C: 0.333 };
    const blob = await client.blend("deadbeef", weights);
    expect(blob.size).toBe(4);
    const sent = JSON.parse(String(calls[0].init?.body));
    expect(sent).toEqual({ content_id: "deadbeef", weights });
  });

  it("raises ApiError with the server's code and message", async () => {
    mockFetch(
      jsonResponse(
        { detail: { error: "bad-weights", message: "blend weights sum to 1.1" } },
        400,
      ),
    );
    const client = new PasticheClient();
    const attempt = client.blend("deadbeef", { A: 0.7, B: 0.4 });
    await expect(attempt).rejects.toThrow("blend weights sum to 1.1");
    await attempt.catch((error: unknown) => {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).status).toBe(400);
      expect((error as ApiError).code).toBe("bad-weights");
    });
  });

  it("requests sweeps in json format and returns the frames", async () => {
    const frames = [
      { alpha: 0, style_loss_a: 0.5, style_loss_b: 0.1, png_base64: "aGk=" },
      { alpha: 1, style_loss_a: 0.1, style_loss_b: 0.5, png_base64: "aGk=" },
    ];
    const calls = mockFetch(jsonResponse({ frames }));
    const client = new PasticheClient();
    const result = await client.sweep("deadbeef", "A", "B", 5);
    const sent = JSON.parse(String(calls[0].init?.body));
    expect(sent).toEqual({
      content_id: "deadbeef",
      style_a: "A",
      style_b: "B",
      steps: 5,
      format: "json",
    });
    expect(result.frames).toEqual(frames);
  });
});
