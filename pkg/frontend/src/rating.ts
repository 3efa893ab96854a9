// Rating flow state machine, DOM-free so it can run under node's test
// runner. The UI layer renders whatever state this exposes; all pass/fail
// logic stays on the server.

import { Answer, EvalApiClient, Protocol, RatingTask } from './api.js';

export type RatingState =
  | { kind: 'loading' }
  | { kind: 'rating'; task: RatingTask; answers: (Answer | null)[] }
  | { kind: 'queue_empty' }
  | { kind: 'error'; message: string };

export interface RatingPayload {
  rater: string;
  answers: Answer[];
}

export class RatingFlow {
  state: RatingState = { kind: 'loading' };
  protocol: Protocol | null = null;
  submittedCount = 0;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly client: EvalApiClient,
    readonly raterId: string,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private setState(state: RatingState): void {
    this.state = state;
    this.notify();
  }

  async start(): Promise<void> {
    try {
      this.protocol = await this.client.getProtocol();
      await this.advance();
    } catch (err) {
      this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
    }
  }

  private async advance(): Promise<void> {
    if (!this.protocol) throw new Error('protocol not loaded');
    this.setState({ kind: 'loading' });
    const task = await this.client.fetchNextTask(this.raterId);
    if (task === null) {
      this.setState({ kind: 'queue_empty' });
      return;
    }
    this.setState({
      kind: 'rating',
      task,
      answers: new Array<Answer | null>(this.protocol.questions.length).fill(null),
    });
  }

  get questionCount(): number {
    return this.protocol ? this.protocol.questions.length : 0;
  }

  get answeredCount(): number {
    if (this.state.kind !== 'rating') return 0;
    return this.state.answers.filter((a) => a !== null).length;
  }

  get canSubmit(): boolean {
    return this.state.kind === 'rating' && this.answeredCount === this.questionCount;
  }

  setAnswer(questionIndex: number, answer: Answer): void {
    if (this.state.kind !== 'rating') throw new Error('no task on screen');
    if (questionIndex < 0 || questionIndex >= this.questionCount) {
      throw new Error(`question index ${questionIndex} out of range`);
    }
    if (!this.protocol!.scale.includes(answer)) {
      throw new Error(`answer ${answer} not on the protocol scale`);
    }
    this.state.answers[questionIndex] = answer;
    this.notify();
  }

  // Exactly one answer per protocol question, in protocol order.
  buildPayload(): RatingPayload {
    if (this.state.kind !== 'rating') throw new Error('no task on screen');
    const answers = this.state.answers;
    if (answers.some((a) => a === null)) {
      throw new Error('all questions must be answered before submitting');
    }
    return { rater: this.raterId, answers: answers.slice() as Answer[] };
  }

  async submit(): Promise<void> {
    if (this.state.kind !== 'rating') throw new Error('no task on screen');
    const task = this.state.task;
    const payload = this.buildPayload(); // throws when incomplete
    try {
      await this.client.submitRating(task.task_id, payload.rater, payload.answers);
      this.submittedCount += 1;
      await this.advance();
    } catch (err) {
      this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
    }
  }
}
