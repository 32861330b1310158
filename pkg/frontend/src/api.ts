// HTTP + SSE client for the dashql service.

import type {
  ExpandResponse,
  OutputEntry,
  ScriptResponse,
  TablePage,
  TaskEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return request<T>(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  postScript(text: string): Promise<ScriptResponse> {
    return this.post("/script", { text });
  }

  setInput(name: string, value: unknown): Promise<ScriptResponse> {
    return this.post("/input", { name, value });
  }

  expandStatement(statement: number): Promise<ExpandResponse> {
    return this.post("/expand", { statement });
  }

  uploadFixture(name: string, contentB64: string): Promise<{ stored: string; uri: string }> {
    return this.post("/fixture", { name, content_b64: contentB64 });
  }

  async outputs(): Promise<OutputEntry[]> {
    const body = await request<{ outputs: OutputEntry[] }>(this.baseUrl + "/outputs");
    return body.outputs;
  }

  tablePage(name: string, offset: number, limit: number, readahead = 0): Promise<TablePage> {
    return request<TablePage>(
      `${this.baseUrl}/table/${name}?offset=${offset}&limit=${limit}&readahead=${readahead}`,
    );
  }
}

/** Parse one SSE frame block ("event: ...\ndata: ...") into a task event. */
export function parseSseBlock(block: string): TaskEvent | null {
  let event = "";
  let data = "";
  for (const line of block.split("\n")) {
    if (line.startsWith("event: ")) event = line.slice(7).trim();
    else if (line.startsWith("data: ")) data += line.slice(6);
  }
  if (event !== "task" || !data) return null;
  try {
    return JSON.parse(data) as TaskEvent;
  } catch {
    return null;
  }
}

/**
 * Subscribe to /events with the streaming fetch API (works in browsers and
 * node alike, unlike EventSource). Returns an unsubscribe function.
 */
export function subscribeEvents(
  baseUrl: string,
  onEvent: (event: TaskEvent) => void,
): () => void {
  const controller = new AbortController();
  void (async () => {
    try {
      const resp = await fetch(baseUrl + "/events", { signal: controller.signal });
      const reader = resp.body?.getReader();
      if (!reader) return;
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let cut;
        while ((cut = buffer.indexOf("\n\n")) >= 0) {
          const block = buffer.slice(0, cut);
          buffer = buffer.slice(cut + 2);
          const event = parseSseBlock(block);
          if (event) onEvent(event);
        }
      }
    } catch {
      /* aborted or connection lost; the caller resubscribes if needed */
    }
  })();
  return () => controller.abort();
}
