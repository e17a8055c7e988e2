/**
 * Coalesced polling: each named task runs at the interval, and a tick never
 * starts a task that is still in flight from a previous tick.
 */

export type PollTask = () => Promise<void>;

export class CoalescedPoller {
  private inFlight = new Set<string>();
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private intervalMs: number,
    private tasks: Record<string, PollTask>,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async tick(): Promise<void> {
    const runs: Promise<void>[] = [];
    for (const [name, task] of Object.entries(this.tasks)) {
      if (this.inFlight.has(name)) continue;
      this.inFlight.add(name);
      runs.push(
        task()
          .catch(() => undefined)
          .finally(() => this.inFlight.delete(name)),
      );
    }
    await Promise.all(runs);
  }

  inFlightCount(): number {
    return this.inFlight.size;
  }
}
