/**
 * Recorded service payloads for replay tests.
 *
 * Captured from the live HTTP app by scripts/record_fixtures.py; the UI
 * suites replay them so every assertion runs against genuine wire
 * traffic. Regenerate with:
 *
 *     python3 frontend/scripts/record_fixtures.py
 */

import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import type { CleanResponse, SessionView, SuggestionResponse } from "../src/types.js";

const dir = resolve(process.cwd(), "tests/fixtures");

function load<T>(name: string): T {
  return JSON.parse(readFileSync(resolve(dir, name), "utf-8")) as T;
}

export const sessionTwoElements = (): SessionView =>
  load<SessionView>("session_two_elements.json");

export const suggestionFixtures = (): Record<string, SuggestionResponse> =>
  load<Record<string, SuggestionResponse>>("suggestions.json");

export const cleanFixture = (): CleanResponse => load<CleanResponse>("clean_response.json");

export interface PreviewFixture {
  base64: string;
  fnv1a32_hex: string;
  length: number;
}

export const previewFixture = (): PreviewFixture => load<PreviewFixture>("preview.json");

export const previewBytes = (): Uint8Array =>
  Uint8Array.from(Buffer.from(previewFixture().base64, "base64"));
