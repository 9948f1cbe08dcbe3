import { describe, expect, it } from "vitest";

import { ApiError, WorldClient } from "../src/client.js";

interface Call {
  url: string;
  init: RequestInit | undefined;
}

function fakeFetch(status: number, payload: unknown) {
  const calls: Call[] = [];
  const fetchFn = (async (url: string | URL | Request, init?: RequestInit) => {
    calls.push({ url: String(url), init });
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
  return { calls, fetchFn };
}

describe("WorldClient", () => {
  it("builds endpoint urls from the base url", async () => {
    const { calls, fetchFn } = fakeFetch(200, { ok: true });
    const client = new WorldClient("http://localhost:8000/", fetchFn);
    await client.info();
    await client.buffer("s1");
    await client.closeSession("s1");
    expect(calls.map((c) => c.url)).toEqual([
      "http://localhost:8000/info",
      "http://localhost:8000/session/s1/buffer",
      "http://localhost:8000/session/s1",
    ]);
    expect(calls[1]?.init?.method).toBe("GET");
    expect(calls[2]?.init?.method).toBe("DELETE");
  });

  it("posts the session request and the action body as json", async () => {
    const { calls, fetchFn } = fakeFetch(200, { ok: true });
    const client = new WorldClient("http://localhost:8000", fetchFn);
    await client.createSession({ mode: "side_by_side", seed: 17 });
    await client.sendAction("s1", { move: 1, strafe: 0, turn: -1, jump: 0 });
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({
      mode: "side_by_side",
      seed: 17,
    });
    expect(JSON.parse(String(calls[1]?.init?.body))).toEqual({
      move: 1,
      strafe: 0,
      turn: -1,
      jump: 0,
    });
  });

  it("raises ApiError with the server's status, message, and field", async () => {
    const { fetchFn } = fakeFetch(409, {
      schema: "worldlab.service.error.v1",
      status: 409,
      error: "session s1 is generating; retry",
      field: null,
    });
    const client = new WorldClient("http://localhost:8000", fetchFn);
    const err = await client
      .sendAction("s1", { move: 0, strafe: 0, turn: 0, jump: 0 })
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toContain("generating");
  });

  it("wraps network failures in a status-0 ApiError", async () => {
    const fetchFn = (async () => {
      throw new TypeError("fetch failed");
    }) as typeof fetch;
    const client = new WorldClient("http://nowhere.invalid:1", fetchFn);
    const err = await client.info().then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(0);
    expect((err as ApiError).message).toContain("cannot reach");
  });

  it("derives the websocket stream url", () => {
    const client = new WorldClient("http://host:8000");
    expect(client.streamUrl("s9")).toBe("ws://host:8000/session/s9/stream");
    const tls = new WorldClient("https://host");
    expect(tls.streamUrl("s9")).toBe("wss://host/session/s9/stream");
  });
});
