/**
 * Server-sent-events client over fetch streaming.
 *
 * Works identically in the browser and in node (for tests), unlike the
 * window-only EventSource. Reconnects automatically with a fixed delay and
 * surfaces staleness to the caller so the UI can show a "disconnected"
 * indicator while it recovers.
 */

export interface SseHandlers {
  onEvent: (name: string, data: unknown) => void;
  /** connection (re)established */
  onOpen?: () => void;
  /** connection lost; client will retry unless closed */
  onStale?: (err: unknown) => void;
}

export interface SseOptions {
  retryMs?: number;
  fetchImpl?: typeof fetch;
}

export class SseStream {
  private closed = false;
  private readonly retryMs: number;
  private readonly fetchImpl: typeof fetch;
  private controller: AbortController | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: SseHandlers,
    opts: SseOptions = {},
  ) {
    this.retryMs = opts.retryMs ?? 1000;
    this.fetchImpl = opts.fetchImpl ?? fetch;
  }

  start(): this {
    void this.loop();
    return this;
  }

  close(): void {
    this.closed = true;
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    while (!this.closed) {
      this.controller = new AbortController();
      try {
        const resp = await this.fetchImpl(this.url, {
          headers: { Accept: "text/event-stream" },
          signal: this.controller.signal,
        });
        if (!resp.ok || !resp.body) {
          throw new Error(`stream request failed: ${resp.status}`);
        }
        this.handlers.onOpen?.();
        await this.consume(resp.body);
        throw new Error("stream ended");
      } catch (err) {
        if (this.closed) return;
        this.handlers.onStale?.(err);
        await sleep(this.retryMs);
      }
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let sep: number;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        this.dispatch(block);
      }
    }
  }

  private dispatch(block: string): void {
    let name = "message";
    const dataLines: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith(":")) continue; // comment / keepalive
      if (line.startsWith("event:")) name = line.slice(6).trim();
      else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
    }
    if (!dataLines.length) return;
    let data: unknown;
    try {
      data = JSON.parse(dataLines.join("\n"));
    } catch {
      return; // tolerate malformed frames rather than killing the stream
    }
    this.handlers.onEvent(name, data);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
