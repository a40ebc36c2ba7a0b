// Deterministic hashed bag-of-words encoder.  Stands in for a real
// pretrained model behind the same wire contract; swap via ENCODER_MODEL.

const FUNCTION_WORDS = new Set([
  'a', 'an', 'the', 'is', 'are', 'was', 'were', 'be', 'been', 'being',
  'to', 'of', 'in', 'on', 'at', 'it', 'its', 'this', 'that', 'and',
  'or', 'as', 'by', 'with', 'for', 'from',
]);

// closed-class words carry little content; keeping them faint lets a
// changed noun move the vector further than an inserted filler phrase
const FUNCTION_WEIGHT = 0.25;

function fnv1a(text: string, salt: number): number {
  let h = (0x811c9dc5 ^ salt) >>> 0;
  for (const byte of Buffer.from(text, 'utf8')) {
    h = (h ^ byte) >>> 0;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h;
}

export function tokenize(text: string): string[] {
  return text.toLowerCase().match(/[\p{L}\p{N}]+/gu) ?? [];
}

export class HashedBowEncoder {
  readonly dim: number;
  readonly model: string;

  constructor(dim = 256, model = 'hashed-bow-v1') {
    if (!Number.isInteger(dim) || dim < 8) {
      throw new Error(`dim must be an integer >= 8, got ${dim}`);
    }
    this.dim = dim;
    this.model = model;
  }

  // two hashed coordinates per token; unit length by construction
  tokenVector(token: string): number[] {
    const v = new Array<number>(this.dim).fill(0);
    v[fnv1a(token, 0) % this.dim] += 1;
    v[fnv1a(token, 0x9e3779b9) % this.dim] += 1;
    return normalize(v);
  }

  tokenVectors(text: string): number[][] {
    return tokenize(text).map((tok) => this.tokenVector(tok));
  }

  sentenceVector(text: string): number[] {
    const v = new Array<number>(this.dim).fill(0);
    let any = false;
    for (const tok of tokenize(text)) {
      any = true;
      const w = FUNCTION_WORDS.has(tok) ? FUNCTION_WEIGHT : 1.0;
      const tv = this.tokenVector(tok);
      for (let i = 0; i < this.dim; i++) v[i] += w * tv[i];
    }
    if (!any) {
      v[0] = 1;
      return v;
    }
    return normalize(v);
  }
}

function normalize(v: number[]): number[] {
  const norm = Math.sqrt(v.reduce((acc, x) => acc + x * x, 0));
  return v.map((x) => x / norm);
}
