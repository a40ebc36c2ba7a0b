import { createServer, type IncomingMessage, type Server, type ServerResponse } from 'node:http';

import { HashedBowEncoder } from './encoder.js';

const MAX_BATCH = 256;
const MAX_TEXT_BYTES = 8192;
const MAX_BODY_BYTES = 4 * 1024 * 1024;

class BodyTooLarge extends Error {}

function send(res: ServerResponse, code: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  res.writeHead(code, {
    'Content-Type': 'application/json',
    'Content-Length': Buffer.byteLength(body),
  });
  res.end(body);
}

async function readBody(req: IncomingMessage): Promise<Buffer> {
  const chunks: Buffer[] = [];
  let size = 0;
  for await (const chunk of req) {
    size += (chunk as Buffer).length;
    if (size > MAX_BODY_BYTES) {
      throw new BodyTooLarge(`body exceeds ${MAX_BODY_BYTES} bytes`);
    }
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks);
}

function handleEmbed(encoder: HashedBowEncoder, body: unknown, res: ServerResponse): void {
  const { texts, granularity } = (body ?? {}) as { texts?: unknown; granularity?: unknown };
  if (!Array.isArray(texts) || texts.length === 0) {
    send(res, 400, { error: 'texts must be a non-empty array' });
    return;
  }
  if (texts.length > MAX_BATCH) {
    send(res, 413, { error: `batch of ${texts.length} exceeds ${MAX_BATCH}` });
    return;
  }
  for (const text of texts) {
    if (typeof text !== 'string') {
      send(res, 400, { error: 'every text must be a string' });
      return;
    }
    if (Buffer.byteLength(text, 'utf8') > MAX_TEXT_BYTES) {
      send(res, 400, { error: `text exceeds ${MAX_TEXT_BYTES} bytes` });
      return;
    }
  }
  if (granularity !== 'sentence' && granularity !== 'token') {
    send(res, 400, { error: 'granularity must be "sentence" or "token"' });
    return;
  }
  const vectors =
    granularity === 'sentence'
      ? (texts as string[]).map((t) => encoder.sentenceVector(t))
      : (texts as string[]).map((t) => encoder.tokenVectors(t));
  send(res, 200, { dim: encoder.dim, vectors });
}

export function createApp(loading: Promise<HashedBowEncoder>): Server {
  let encoder: HashedBowEncoder | null = null;
  loading.then((e) => {
    encoder = e;
  });

  return createServer(async (req, res) => {
    try {
      if (req.method === 'GET' && req.url === '/healthz') {
        if (!encoder) {
          send(res, 503, { error: 'encoder is still loading' });
        } else {
          send(res, 200, { dim: encoder.dim, model: encoder.model });
        }
        return;
      }
      if (req.method === 'POST' && req.url === '/embed') {
        if (!encoder) {
          send(res, 503, { error: 'encoder is still loading' });
          return;
        }
        let body: unknown;
        try {
          body = JSON.parse((await readBody(req)).toString('utf8'));
        } catch (err) {
          if (err instanceof BodyTooLarge) {
            send(res, 413, { error: err.message });
          } else {
            send(res, 400, { error: 'request body is not valid JSON' });
          }
          return;
        }
        handleEmbed(encoder, body, res);
        return;
      }
      send(res, 404, { error: 'not found' });
    } catch (err) {
      send(res, 500, { error: err instanceof Error ? err.message : 'internal error' });
    }
  });
}
