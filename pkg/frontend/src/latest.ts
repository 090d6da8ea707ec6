// Single-flight gate where the newest submission wins.
//
// Slider scrubbing can outrun the server.  The gate keeps at most one
// request in flight; anything submitted meanwhile replaces the queued
// candidate, and when the in-flight request settles the newest candidate
// (if any) is launched.  A response that has already been superseded is
// dropped: its promise resolves to undefined instead of delivering a stale
// pastiche, and its error (if it failed) is swallowed for the same reason.

type Task<T> = () => Promise<T>;

interface Entry<T> {
  task: Task<T>;
  resolve: (value: T | undefined) => void;
  reject: (error: unknown) => void;
}

export class LatestGate<T> {
  private running = false;
  private queued: Entry<T> | null = null;

  get busy(): boolean {
    return this.running;
  }

  submit(task: Task<T>): Promise<T | undefined> {
    return new Promise<T | undefined>((resolve, reject) => {
      const entry: Entry<T> = { task, resolve, reject };
      if (this.running) {
        if (this.queued) this.queued.resolve(undefined); // replaced before it ran
        this.queued = entry;
      } else {
        this.launch(entry);
      }
    });
  }

  private launch(entry: Entry<T>): void {
    this.running = true;
    entry.task().then(
      (value) => this.settle(entry, { ok: true, value }),
      (error) => this.settle(entry, { ok: false, error }),
    );
  }

  private settle(
    entry: Entry<T>,
    outcome: { ok: true; value: T } | { ok: false; error: unknown },
  ): void {
    this.running = false;
    const next = this.queued;
    this.queued = null;
    if (next) {
      entry.resolve(undefined); // superseded while in flight: stale, drop it
      this.launch(next);
    } else if (outcome.ok) {
      entry.resolve(outcome.value);
    } else {
      entry.reject(outcome.error);
    }
  }
}
