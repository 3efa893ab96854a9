// Typed client for the evaluation + curation HTTP API. The fetch
// implementation is injectable so the flows can be tested against a stub
// server without any network.
async function parseError(response) {
    try {
        const body = await response.json();
        if (body && typeof body.error === 'string')
            return body.error;
    }
    catch {
        // fall through to the generic message
    }
    return `request failed with status ${response.status}`;
}
export class EvalApiClient {
    constructor(baseUrl, fetchImpl) {
        this.baseUrl = baseUrl;
        this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
    }
    async getJson(path) {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`);
        if (!response.ok)
            throw new Error(await parseError(response));
        return (await response.json());
    }
    async postJson(path, body) {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
        });
        if (!response.ok)
            throw new Error(await parseError(response));
        return (await response.json());
    }
    getProtocol() {
        return this.getJson('/protocol');
    }
    async fetchNextTask(raterId) {
        const payload = await this.getJson(`/tasks/next?rater=${encodeURIComponent(raterId)}`);
        return payload.task;
    }
    submitRating(taskId, raterId, answers) {
        // The payload carries raw answers only; verdicts are computed server-side.
        return this.postJson(`/tasks/${encodeURIComponent(taskId)}/rating`, {
            rater: raterId,
            answers,
        });
    }
    // Cache-buster per task: panels must never show a stale image.
    imageUrl(assetId, nonce) {
        return `${this.baseUrl}/assets/${encodeURIComponent(assetId)}/image?v=${encodeURIComponent(nonce)}`;
    }
    async pendingEntries(category) {
        const payload = await this.getJson(`/bank/${encodeURIComponent(category)}/pending`);
        return payload.entries;
    }
    decideEntry(entryId, decision, reviewer) {
        return this.postJson(`/bank/entries/${encodeURIComponent(entryId)}/decision`, {
            decision,
            reviewer,
        });
    }
    getReport() {
        return this.getJson('/report');
    }
}
