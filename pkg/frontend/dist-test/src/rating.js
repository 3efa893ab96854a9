// Rating flow state machine, DOM-free so it can run under node's test
// runner. The UI layer renders whatever state this exposes; all pass/fail
// logic stays on the server.
export class RatingFlow {
    constructor(client, raterId) {
        this.client = client;
        this.raterId = raterId;
        this.state = { kind: 'loading' };
        this.protocol = null;
        this.submittedCount = 0;
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
    async start() {
        try {
            this.protocol = await this.client.getProtocol();
            await this.advance();
        }
        catch (err) {
            this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
        }
    }
    async advance() {
        if (!this.protocol)
            throw new Error('protocol not loaded');
        this.setState({ kind: 'loading' });
        const task = await this.client.fetchNextTask(this.raterId);
        if (task === null) {
            this.setState({ kind: 'queue_empty' });
            return;
        }
        this.setState({
            kind: 'rating',
            task,
            answers: new Array(this.protocol.questions.length).fill(null),
        });
    }
    get questionCount() {
        return this.protocol ? this.protocol.questions.length : 0;
    }
    get answeredCount() {
        if (this.state.kind !== 'rating')
            return 0;
        return this.state.answers.filter((a) => a !== null).length;
    }
    get canSubmit() {
        return this.state.kind === 'rating' && this.answeredCount === this.questionCount;
    }
    setAnswer(questionIndex, answer) {
        if (this.state.kind !== 'rating')
            throw new Error('no task on screen');
        if (questionIndex < 0 || questionIndex >= this.questionCount) {
            throw new Error(`question index ${questionIndex} out of range`);
        }
        if (!this.protocol.scale.includes(answer)) {
            throw new Error(`answer ${answer} not on the protocol scale`);
        }
        this.state.answers[questionIndex] = answer;
        this.notify();
    }
    // Exactly one answer per protocol question, in protocol order.
    buildPayload() {
        if (this.state.kind !== 'rating')
            throw new Error('no task on screen');
        const answers = this.state.answers;
        if (answers.some((a) => a === null)) {
            throw new Error('all questions must be answered before submitting');
        }
        return { rater: this.raterId, answers: answers.slice() };
    }
    async submit() {
        if (this.state.kind !== 'rating')
            throw new Error('no task on screen');
        const task = this.state.task;
        const payload = this.buildPayload(); // throws when incomplete
        try {
            await this.client.submitRating(task.task_id, payload.rater, payload.answers);
            this.submittedCount += 1;
            await this.advance();
        }
        catch (err) {
            this.setState({ kind: 'error', message: String(err instanceof Error ? err.message : err) });
        }
    }
}
