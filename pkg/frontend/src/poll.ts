/** Interval polling with coalescing: if a refresh is still in flight when
 * the next tick fires, the tick is skipped instead of stacking requests.
 */

export type PollTask = () => Promise<void>;

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(
    private readonly task: PollTask,
    private readonly intervalMs = 1000,
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) return;
    // a rejected poll must not kill the interval or leak an unhandled rejection
    const safeTick = () => this.tick().catch(() => {});
    this.timer = setInterval(() => {
      void safeTick();
    }, this.intervalMs);
    void safeTick();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Run one poll now unless one is already in flight. */
  async tick(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.task();
    } finally {
      this.inFlight = false;
    }
  }
}
