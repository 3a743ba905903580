/** Mock fetch plumbing: fixed JSON per route, with request capture. */

import { FetchLike } from "../src/api.js";

export interface CapturedRequest {
  url: string;
  method: string;
  body: unknown;
}

export function mockFetch(
  routes: Record<string, unknown | ((req: CapturedRequest) => unknown)>,
  captured: CapturedRequest[] = [],
): FetchLike {
  return async (url: string, init?: RequestInit) => {
    const request: CapturedRequest = {
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : null,
    };
    captured.push(request);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = Object.keys(routes).find((k) => path === k || path.startsWith(`${k}?`));
    if (key === undefined) {
      return new Response(JSON.stringify({ detail: `no route for ${path}` }), {
        status: 404,
        headers: { "Content-Type": "application/json" },
      });
    }
    const value = routes[key];
    const payload = typeof value === "function" ? (value as Function)(request) : value;
    return new Response(JSON.stringify(payload), {
      status: 200,
      headers: { "Content-Type": "application/json" },
    });
  };
}
