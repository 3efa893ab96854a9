import assert from 'node:assert/strict';
import { test } from 'node:test';
import { EvalApiClient } from '../src/api.js';
import { makeStubServer, stubTasks } from './stub_server.js';
test('image urls carry a per-task cache buster', () => {
    const client = new EvalApiClient('http://stub');
    const a = client.imageUrl('asset-1', 'task-1');
    const b = client.imageUrl('asset-1', 'task-2');
    assert.notEqual(a, b);
    assert.match(a, /\/assets\/asset-1\/image\?v=task-1$/);
});
test('fetchNextTask returns null on an empty queue', async () => {
    const server = makeStubServer({ tasks: [] });
    const client = new EvalApiClient('http://stub', server.fetchImpl);
    assert.equal(await client.fetchNextTask('r1'), null);
});
test('rater ids are url-encoded', async () => {
    const server = makeStubServer({ tasks: stubTasks(1) });
    const client = new EvalApiClient('http://stub', server.fetchImpl);
    await client.fetchNextTask('rater one&two');
    assert.equal(server.requests[0], 'GET /tasks/next');
});
test('non-ok responses raise the server error message', async () => {
    const server = makeStubServer();
    const client = new EvalApiClient('http://stub', server.fetchImpl);
    await assert.rejects(client.pendingEntries('chair').then(() => client.decideEntry('ghost', 'approved', 'me')), /not found/);
});
