// Prompt-bank curation flow: list a category's pending prompts, approve
// or reject with one click, refresh after every decision.
export class CurationFlow {
    constructor(client, reviewer) {
        this.client = client;
        this.reviewer = reviewer;
        this.state = { kind: 'idle' };
        this.listeners = [];
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    notify() {
        for (const listener of this.listeners)
            listener();
    }
    setState(state) {
        this.state = state;
        this.notify();
    }
    async load(category) {
        if (!category) {
            this.setState({ kind: 'error', message: 'enter a category to curate' });
            return;
        }
        this.setState({ kind: 'loading', category });
        try {
            const entries = await this.client.pendingEntries(category);
            this.setState({ kind: 'listing', category, entries });
        }
        catch (err) {
            this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
        }
    }
    async decide(entryId, decision) {
        if (this.state.kind !== 'listing')
            throw new Error('no category loaded');
        const category = this.state.category;
        try {
            await this.client.decideEntry(entryId, decision, this.reviewer);
            await this.load(category); // decided entries drop out of the pending list
        }
        catch (err) {
            this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
        }
    }
}
