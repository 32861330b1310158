// Editor input debouncing; queued calls collapse to the latest value.

export function debounce<T>(fn: (value: T) => void, delayMs: number): (value: T) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (value: T) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(value);
    }, delayMs);
  };
}

/**
 * One in-flight mutation at a time; edits arriving while a request runs
 * collapse so only the latest is sent afterwards.
 */
export class MutationQueue<T> {
  private inFlight = false;
  private pending: T | undefined;
  private hasPending = false;

  constructor(private readonly send: (value: T) => Promise<void>) {}

  async push(value: T): Promise<void> {
    if (this.inFlight) {
      this.pending = value;
      this.hasPending = true;
      return;
    }
    this.inFlight = true;
    try {
      await this.send(value);
    } finally {
      this.inFlight = false;
    }
    if (this.hasPending) {
      const next = this.pending as T;
      this.hasPending = false;
      this.pending = undefined;
      await this.push(next);
    }
  }

  get busy(): boolean {
    return this.inFlight;
  }
}
