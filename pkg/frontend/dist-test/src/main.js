// DOM wiring: renders the rating and curation flows and maps keyboard
// shortcuts 1-4 onto the focused question's answer scale.
import { EvalApiClient } from './api.js';
import { CurationFlow } from './curation.js';
import { RatingFlow } from './rating.js';
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
function serverBase() {
    const params = new URLSearchParams(window.location.search);
    return params.get('server') ?? `${window.location.protocol}//${window.location.hostname}:8080`;
}
function raterId() {
    const params = new URLSearchParams(window.location.search);
    const fromUrl = params.get('rater');
    if (fromUrl)
        return fromUrl;
    const stored = window.localStorage.getItem('rater_id');
    if (stored)
        return stored;
    const generated = `rater-${Math.random().toString(36).slice(2, 8)}`;
    window.localStorage.setItem('rater_id', generated);
    return generated;
}
const client = new EvalApiClient(serverBase());
const rating = new RatingFlow(client, raterId());
const curation = new CurationFlow(client, raterId());
let focusedQuestion = 0;
function renderRating() {
    const panel = el('rating-panel');
    const status = el('rating-status');
    const images = el('images');
    const questions = el('questions');
    const submit = el('submit');
    const state = rating.state;
    submit.disabled = !rating.canSubmit;
    el('done-count').textContent = String(rating.submittedCount);
    if (state.kind === 'loading') {
        status.textContent = 'Loading…';
        return;
    }
    if (state.kind === 'queue_empty') {
        status.textContent = 'Queue empty — no more images to rate. Thank you!';
        images.replaceChildren();
        questions.replaceChildren();
        submit.disabled = true;
        return;
    }
    if (state.kind === 'error') {
        status.textContent = `Error: ${state.message}`;
        return;
    }
    const { task, answers } = state;
    status.textContent = `Rating image ${task.asset_id} (${rating.answeredCount}/${rating.questionCount} answered)`;
    images.replaceChildren();
    const sources = document.createElement('div');
    sources.className = 'source-images';
    for (const sourceId of task.source_asset_ids) {
        const img = document.createElement('img');
        img.src = client.imageUrl(sourceId, task.task_id);
        img.alt = `source ${sourceId}`;
        sources.appendChild(img);
    }
    const generated = document.createElement('div');
    generated.className = 'generated-image';
    const genImg = document.createElement('img');
    genImg.src = client.imageUrl(task.asset_id, task.task_id);
    genImg.alt = `generated ${task.asset_id}`;
    generated.appendChild(genImg);
    images.append(sources, generated);
    questions.replaceChildren();
    rating.protocol.questions.forEach((question, qi) => {
        const row = document.createElement('fieldset');
        row.className = 'question' + (qi === focusedQuestion ? ' focused' : '');
        row.addEventListener('click', () => {
            focusedQuestion = qi;
            renderRating();
        });
        const legend = document.createElement('legend');
        legend.textContent = `${qi + 1}. ${question.text}`;
        row.appendChild(legend);
        rating.protocol.scale.forEach((option, oi) => {
            const label = document.createElement('label');
            const input = document.createElement('input');
            input.type = 'radio';
            input.name = `q-${qi}`;
            input.value = option;
            input.checked = answers[qi] === option;
            input.addEventListener('change', () => {
                rating.setAnswer(qi, option);
                focusedQuestion = Math.min(qi + 1, rating.questionCount - 1);
            });
            label.append(input, ` ${oi + 1}:${option}`);
            row.appendChild(label);
        });
        questions.appendChild(row);
    });
    panel.scrollTop = panel.scrollTop; // keep position on re-render
}
function renderCuration() {
    const status = el('curation-status');
    const list = el('pending-list');
    const state = curation.state;
    if (state.kind === 'idle') {
        status.textContent = 'Enter a category and load its pending prompts.';
        list.replaceChildren();
        return;
    }
    if (state.kind === 'loading') {
        status.textContent = `Loading ${state.category}…`;
        return;
    }
    if (state.kind === 'error') {
        status.textContent = `Error: ${state.message}`;
        return;
    }
    status.textContent = state.entries.length
        ? `${state.entries.length} pending prompt(s) for "${state.category}"`
        : `No pending prompts for "${state.category}".`;
    list.replaceChildren();
    for (const entry of state.entries) {
        const item = document.createElement('li');
        const text = document.createElement('span');
        text.textContent = entry.prompt_text;
        const approve = document.createElement('button');
        approve.textContent = 'Approve';
        approve.addEventListener('click', () => void curation.decide(entry.entry_id, 'approved'));
        const reject = document.createElement('button');
        reject.textContent = 'Reject';
        reject.addEventListener('click', () => void curation.decide(entry.entry_id, 'rejected'));
        item.append(text, approve, reject);
        list.appendChild(item);
    }
}
function bindKeyboard() {
    document.addEventListener('keydown', (event) => {
        if (rating.state.kind !== 'rating')
            return;
        const scale = rating.protocol.scale;
        const digit = Number(event.key);
        if (digit >= 1 && digit <= scale.length) {
            rating.setAnswer(focusedQuestion, scale[digit - 1]);
            focusedQuestion = Math.min(focusedQuestion + 1, rating.questionCount - 1);
            renderRating();
            event.preventDefault();
            return;
        }
        if (event.key === 'ArrowDown') {
            focusedQuestion = Math.min(focusedQuestion + 1, rating.questionCount - 1);
            renderRating();
            event.preventDefault();
        }
        else if (event.key === 'ArrowUp') {
            focusedQuestion = Math.max(focusedQuestion - 1, 0);
            renderRating();
            event.preventDefault();
        }
        else if (event.key === 'Enter' && rating.canSubmit) {
            void rating.submit();
            event.preventDefault();
        }
    });
}
function bindTabs() {
    el('tab-rate').addEventListener('click', () => {
        el('rating-panel').hidden = false;
        el('curation-panel').hidden = true;
    });
    el('tab-curate').addEventListener('click', () => {
        el('rating-panel').hidden = true;
        el('curation-panel').hidden = false;
    });
}
function init() {
    el('rater-name').textContent = rating.raterId;
    rating.onChange(() => {
        if (rating.state.kind === 'rating')
            focusedQuestion = 0;
        renderRating();
    });
    curation.onChange(renderCuration);
    el('submit').addEventListener('click', () => void rating.submit());
    el('load-pending').addEventListener('click', () => {
        const category = el('category-input').value.trim();
        void curation.load(category);
    });
    bindKeyboard();
    bindTabs();
    void rating.start();
    renderCuration();
}
init();
