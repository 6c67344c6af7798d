import { vi } from "vitest";

export interface RouteTable {
  [key: string]: { status?: number; body: unknown } | ((body: unknown) => { status?: number; body: unknown });
}

/** Install a fetch mock that serves recorded fixtures by "METHOD path". */
export function mockFetch(routes: RouteTable): { calls: string[] } {
  const calls: string[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      const method = init?.method ?? "GET";
      const key = `${method} ${url}`;
      calls.push(key);
      const entry = routes[key];
      if (!entry) {
        throw new Error(`no fixture for ${key}`);
      }
      const parsed = init?.body ? JSON.parse(init.body as string) : undefined;
      const resolved = typeof entry === "function" ? entry(parsed) : entry;
      const status = resolved.status ?? 200;
      return {
        ok: status >= 200 && status < 300,
        status,
        json: async () => resolved.body,
        text: async () => JSON.stringify(resolved.body),
      } as Response;
    }),
  );
  return { calls };
}
