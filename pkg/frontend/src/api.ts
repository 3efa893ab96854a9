// Typed client for the evaluation + curation HTTP API. The fetch
// implementation is injectable so the flows can be tested against a stub
// server without any network.

export type Answer = 'yes' | 'maybe' | 'no' | 'unclear';

export interface ProtocolQuestion {
  id: string;
  text: string;
}

export interface Protocol {
  version: string;
  scale: Answer[];
  questions: ProtocolQuestion[];
}

export interface RatingTask {
  task_id: string;
  asset_id: string;
  source_asset_ids: string[];
  status: string;
}

export interface PendingEntry {
  entry_id: string;
  prompt_text: string;
  status: string;
}

export interface PassRateReport {
  per_image_pass_rate: number;
  per_product_pass_rate: number;
  assets_with_complete_panel: number;
  products: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') return body.error;
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export class EvalApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(readonly baseUrl: string, fetchImpl?: FetchLike) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) throw new Error(await parseError(response));
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new Error(await parseError(response));
    return (await response.json()) as T;
  }

  getProtocol(): Promise<Protocol> {
    return this.getJson<Protocol>('/protocol');
  }

  async fetchNextTask(raterId: string): Promise<RatingTask | null> {
    const payload = await this.getJson<{ task: RatingTask | null }>(
      `/tasks/next?rater=${encodeURIComponent(raterId)}`,
    );
    return payload.task;
  }

  submitRating(taskId: string, raterId: string, answers: Answer[]): Promise<unknown> {
    // The payload carries raw answers only; verdicts are computed server-side.
    return this.postJson(`/tasks/${encodeURIComponent(taskId)}/rating`, {
      rater: raterId,
      answers,
    });
  }

  // Cache-buster per task: panels must never show a stale image.
  imageUrl(assetId: string, nonce: string): string {
    return `${this.baseUrl}/assets/${encodeURIComponent(assetId)}/image?v=${encodeURIComponent(nonce)}`;
  }

  async pendingEntries(category: string): Promise<PendingEntry[]> {
    const payload = await this.getJson<{ entries: PendingEntry[] }>(
      `/bank/${encodeURIComponent(category)}/pending`,
    );
    return payload.entries;
  }

  decideEntry(
    entryId: string,
    decision: 'approved' | 'rejected',
    reviewer: string,
  ): Promise<PendingEntry> {
    return this.postJson<PendingEntry>(`/bank/entries/${encodeURIComponent(entryId)}/decision`, {
      decision,
      reviewer,
    });
  }

  getReport(): Promise<PassRateReport> {
    return this.getJson<PassRateReport>('/report');
  }
}
