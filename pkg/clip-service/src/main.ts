/** Service entry point.
 *
 *   node dist/main.js [--port N] [--backend clip|test] [--model <id>] [--max-concurrent N]
 *
 * Prints one line, `listening on http://host:port model=<id> dim=<D>`, once
 * the server is ready (port 0 picks a free port).
 */

import { createServer } from "./server.js";
import { TestProjectionBackend } from "./testBackend.js";
import { ClipBackend, DEFAULT_CLIP_MODEL } from "./clipBackend.js";
import type { EmbeddingBackend } from "./embedding.js";

interface Args {
  port: number;
  backend: string;
  model: string;
  maxConcurrent: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { port: 8600, backend: "clip", model: DEFAULT_CLIP_MODEL, maxConcurrent: 16 };
  for (let i = 0; i < argv.length; i++) {
    const key = argv[i];
    const value = argv[i + 1];
    switch (key) {
      case "--port":
        args.port = Number(value); i++; break;
      case "--backend":
        args.backend = String(value); i++; break;
      case "--model":
        args.model = String(value); i++; break;
      case "--max-concurrent":
        args.maxConcurrent = Number(value); i++; break;
      default:
        throw new Error(`unknown argument ${key}`);
    }
  }
  if (!Number.isInteger(args.port) || args.port < 0 || args.port > 65535) {
    throw new Error(`invalid port ${args.port}`);
  }
  if (args.backend !== "clip" && args.backend !== "test") {
    throw new Error(`invalid backend '${args.backend}' (expected clip or test)`);
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  const backend: EmbeddingBackend =
    args.backend === "test" ? new TestProjectionBackend() : await ClipBackend.load(args.model);
  const server = createServer(backend, { maxConcurrent: args.maxConcurrent });
  server.listen(args.port, "127.0.0.1", () => {
    const address = server.address();
    const port = typeof address === "object" && address ? address.port : args.port;
    console.log(`listening on http://127.0.0.1:${port} model=${backend.modelId} dim=${backend.dim}`);
  });
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : err);
  process.exit(1);
});
