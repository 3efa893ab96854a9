// Prompt-bank curation flow: list a category's pending prompts, approve
// or reject with one click, refresh after every decision.

import { EvalApiClient, PendingEntry } from './api.js';

export type CurationState =
  | { kind: 'idle' }
  | { kind: 'loading'; category: string }
  | { kind: 'listing'; category: string; entries: PendingEntry[] }
  | { kind: 'error'; message: string };

export class CurationFlow {
  state: CurationState = { kind: 'idle' };
  private listeners: Array<() => void> = [];

  constructor(
    private readonly client: EvalApiClient,
    readonly reviewer: string,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private setState(state: CurationState): void {
    this.state = state;
    this.notify();
  }

  async load(category: string): Promise<void> {
    if (!category) {
      this.setState({ kind: 'error', message: 'enter a category to curate' });
      return;
    }
    this.setState({ kind: 'loading', category });
    try {
      const entries = await this.client.pendingEntries(category);
      this.setState({ kind: 'listing', category, entries });
    } catch (err) {
      this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
    }
  }

  async decide(entryId: string, decision: 'approved' | 'rejected'): Promise<void> {
    if (this.state.kind !== 'listing') throw new Error('no category loaded');
    const category = this.state.category;
    try {
      await this.client.decideEntry(entryId, decision, this.reviewer);
      await this.load(category); // decided entries drop out of the pending list
    } catch (err) {
      this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
    }
  }
}
