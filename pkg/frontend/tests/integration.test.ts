/**
 * End-to-end against the real service: mock VLM + `paza serve`, driven over
 * HTTP exactly as a browser session would be. Covers: alerts rendering from
 * the stream without reload, review updating both client and server store,
 * and a second client observing the review via its own stream.
 */

import { type ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { DashboardApi } from "../src/api.js";
import { AlertFeedStore } from "../src/store.js";

const PY = process.env.PAZA_PYTHON ?? "python3";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.once("error", reject);
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as net.AddressInfo).port;
      srv.close(() => resolve(port));
    });
  });
}

function waitForLine(proc: ChildProcess, needle: string, timeoutMs = 20_000): Promise<void> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for "${needle}"`)),
      timeoutMs,
    );
    let buffer = "";
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      if (buffer.includes(needle)) {
        clearTimeout(timer);
        resolve();
      }
    });
    proc.once("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`process exited early (${code}): ${buffer}`));
    });
  });
}

function waitFor(predicate: () => boolean, timeoutMs = 20_000): Promise<void> {
  const start = Date.now();
  return new Promise((resolve, reject) => {
    const tick = () => {
      if (predicate()) return resolve();
      if (Date.now() - start > timeoutMs) return reject(new Error("timed out waiting"));
      setTimeout(tick, 25);
    };
    tick();
  });
}

describe("dashboard against a live replayed service", () => {
  let workDir: string;
  let mockProc: ChildProcess;
  let serveProc: ChildProcess;
  let base: string;
  let trace: string;

  beforeAll(async () => {
    workDir = mkdtempSync(path.join(os.tmpdir(), "paza-dash-"));
    const mockPort = await freePort();
    const servePort = await freePort();

    mockProc = spawn(PY, ["-m", "paza.cli", "mock-vlm", "--port", String(mockPort)]);
    await waitForLine(mockProc, "mock VLM listening");

    serveProc = spawn(
      PY,
      [
        "-m", "paza.cli", "serve",
        "--port", String(servePort),
        "--tick-s", "0.1",
        "--alert-dir", path.join(workDir, "alerts"),
      ],
      {
        env: {
          ...process.env,
          VLM_API_URL: `http://127.0.0.1:${mockPort}`,
          VLM_MODEL_NAME: "mock",
        },
      },
    );
    await waitForLine(serveProc, "paza service listening");
    base = `http://127.0.0.1:${servePort}`;

    trace = path.join(workDir, "trace.jsonl");
    execFileSync(PY, [
      "-m", "paza.cli", "simulate",
      "--cameras", "1", "--duration", "30", "--seed", "4",
      "--arrival-rate", "12", "--browse-frac", "0.3",
      "--pickup-frac", "0.2", "--conceal-frac", "0.3",
      "-o", trace,
    ]);
  });

  afterAll(() => {
    mockProc?.kill();
    serveProc?.kill();
    rmSync(workDir, { recursive: true, force: true });
  });

  it("streams alerts to live clients and propagates reviews", async () => {
    const clientA = new AlertFeedStore(new DashboardApi(base));
    const clientB = new AlertFeedStore(new DashboardApi(base));
    clientA.connect(200);
    clientB.connect(200);
    try {
      await waitFor(() => !clientA.stale && !clientB.stale);

      // feed the recorded trace through ingest, as the bridge would
      const body = readFileSync(trace, "utf-8");
      const resp = await fetch(`${base}/api/ingest`, { method: "POST", body });
      expect(resp.status).toBe(202);
      const ingest = (await resp.json()) as { accepted: number; errors: string[] };
      expect(ingest.errors).toEqual([]);
      expect(ingest.accepted).toBe(300);

      // alerts render from the stream alone: no refresh() was ever called
      await waitFor(() => clientA.size >= 2 && clientB.size >= 2);
      const first = clientA.list().at(-1)!; // oldest
      expect(first.category).toBe("CONFIRMED");
      expect(first.review).toBe("pending");
      expect(first.clip_window_ms[1] - first.clip_window_ms[0]).toBe(7000);

      // client A reviews; its own state updates from the POST response
      const reviewed = await clientA.review(first.alert_id, "dismissed", "staff member");
      expect(reviewed?.review).toBe("dismissed");
      expect(clientA.get(first.alert_id)?.review).toBe("dismissed");

      // the server store persisted it
      const fromServer = (await (
        await fetch(`${base}/api/alerts/${first.alert_id}`)
      ).json()) as { review: string; review_note: string };
      expect(fromServer.review).toBe("dismissed");
      expect(fromServer.review_note).toBe("staff member");

      // client B sees the review arrive on its stream, no reload involved
      await waitFor(() => clientB.get(first.alert_id)?.review === "dismissed");

      // a second review attempt loses: server state wins on both clients
      const second = await clientB.review(first.alert_id, "confirmed");
      expect(second).toBeNull(); // local guard: not pending anymore
      expect(clientB.get(first.alert_id)?.review).toBe("dismissed");

      // stats flow over the same stream
      await waitFor(() => (clientA.stats?.frames_processed ?? 0) >= 300);
    } finally {
      clientA.disconnect();
      clientB.disconnect();
    }
  });

  it("recovers missed alerts after a reconnect via since_ms", async () => {
    const late = new AlertFeedStore(new DashboardApi(base));
    // connects after everything already happened: refresh pulls history,
    // exactly what the stream client does on every (re)connect
    late.connect(200);
    try {
      await waitFor(() => late.size >= 2);
      expect(late.list().every((a) => ["CONFIRMED", "UNCERTAIN"].includes(a.category))).toBe(
        true,
      );
    } finally {
      late.disconnect();
    }
  });
});
