// Debounced single-in-flight runner for the confidence slider.
//
// Slider moves are coalesced over a debounce window; while a request is in
// flight any newer value supersedes it and runs once the current one settles.
// At most one request is ever outstanding.

export type Runner = (confidence: number) => Promise<void>;

export class RecognizeScheduler {
  private pending: number | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;

  constructor(
    private readonly run: Runner,
    private readonly debounceMs: number = 250,
  ) {}

  /** Ask for a recognize pass at this confidence; older queued values are dropped. */
  request(confidence: number): void {
    this.pending = confidence;
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.flush();
    }, this.debounceMs);
  }

  /** Run immediately, bypassing the debounce (initial recognize button). */
  requestNow(confidence: number): void {
    this.pending = confidence;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    void this.flush();
  }

  private async flush(): Promise<void> {
    if (this.inFlight || this.pending === null) {
      return; // the in-flight completion will pick the pending value up
    }
    const value = this.pending;
    this.pending = null;
    this.inFlight = true;
    try {
      await this.run(value);
    } catch {
      // the runner owns error reporting; a failure must not wedge the queue
    } finally {
      this.inFlight = false;
      if (this.pending !== null && this.timer === null) {
        void this.flush();
      }
    }
  }
}
