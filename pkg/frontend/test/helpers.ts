/** Fixture-backed fetch: replays the recorded primary-server responses and
 * records every request the client makes, so tests assert exact wire traffic
 * with no live server. */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";

const FIXTURE_DIR = join(__dirname, "fixtures");

export interface Fixture {
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: unknown;
}

export function loadFixtures(): Fixture[] {
  return readdirSync(FIXTURE_DIR)
    .filter((f) => f.endsWith(".json") && f !== "source_image.json")
    .map((f) => JSON.parse(readFileSync(join(FIXTURE_DIR, f), "utf8")));
}

export function sourceImage(): { image: string; attributes: number[] } {
  return JSON.parse(readFileSync(join(FIXTURE_DIR, "source_image.json"), "utf8"));
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

export function fixtureFetch() {
  const fixtures = loadFixtures();
  const calls: RecordedCall[] = [];

  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]*/, "");
    const body = init?.body ? JSON.parse(init.body as string) : null;
    calls.push({ method, path, body });
    const match = fixtures.find(
      (f) =>
        f.method === method &&
        f.path === path &&
        JSON.stringify(f.request) === JSON.stringify(body),
    );
    if (!match) {
      throw new Error(
        `no recorded fixture for ${method} ${path} body=${JSON.stringify(body)}`,
      );
    }
    return new Response(JSON.stringify(match.response), {
      status: match.status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { impl, calls };
}
