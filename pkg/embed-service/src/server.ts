import { createApp } from './app.js';
import { HashedBowEncoder } from './encoder.js';

const port = Number(process.env.PORT ?? 8901);
const dim = Number(process.env.EMBED_DIM ?? 256);
const model = process.env.ENCODER_MODEL ?? 'hashed-bow-v1';

const loading = Promise.resolve().then(() => {
  const encoder = new HashedBowEncoder(dim, model);
  console.error(`encoder ready (dim=${encoder.dim}, model=${encoder.model})`);
  return encoder;
});

const app = createApp(loading);
app.listen(port, () => {
  console.error(`embed-service listening on :${port}`);
});
