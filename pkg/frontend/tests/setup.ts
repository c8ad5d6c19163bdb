import { cleanup } from "@testing-library/react";
import { afterEach } from "vitest";

// point the API client at the spawned fixture-backed service
globalThis.__BIOQUERY_API__ = process.env.BIOQUERY_TEST_API;
(globalThis as Record<string, unknown>).IS_REACT_ACT_ENVIRONMENT = true;

afterEach(() => {
  cleanup();
});
