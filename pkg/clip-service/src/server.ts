/** HTTP layer implementing the embedding wire contract.
 *
 *   GET  /health       -> 200 {"model": "<id>", "dim": D}
 *   POST /embed_image  {"png_base64": "..."} -> 200 {"embedding": [...], "dim": D}
 *   POST /embed_text   {"text": "..."}       -> 200 {"embedding": [...], "dim": D}
 *
 * 400 for malformed bodies, 500 for model failures, 503 when more than
 * the configured number of requests are in flight.
 */

import http from "node:http";
import { EmbeddingBackend, BadInputError } from "./embedding.js";

export interface ServerOptions {
  maxConcurrent?: number;
}

function sendJson(res: http.ServerResponse, code: number, doc: unknown): void {
  const body = JSON.stringify(doc);
  res.writeHead(code, {
    "Content-Type": "application/json; charset=utf-8",
    "Content-Length": Buffer.byteLength(body),
  });
  res.end(body);
}

function readBody(req: http.IncomingMessage, limit = 64 * 1024 * 1024): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let size = 0;
    req.on("data", (chunk: Buffer) => {
      size += chunk.length;
      if (size > limit) {
        reject(new BadInputError("request body too large"));
        req.destroy();
        return;
      }
      chunks.push(chunk);
    });
    req.on("end", () => resolve(Buffer.concat(chunks)));
    req.on("error", reject);
  });
}

export function createServer(
  backend: EmbeddingBackend,
  options: ServerOptions = {},
): http.Server {
  const maxConcurrent = options.maxConcurrent ?? 16;
  let inFlight = 0;

  return http.createServer(async (req, res) => {
    if (req.method === "GET" && req.url === "/health") {
      sendJson(res, 200, { model: backend.modelId, dim: backend.dim });
      return;
    }
    if (req.method !== "POST" || (req.url !== "/embed_image" && req.url !== "/embed_text")) {
      sendJson(res, 404, { error: "not found" });
      return;
    }
    if (inFlight >= maxConcurrent) {
      sendJson(res, 503, { error: "saturated, retry later" });
      return;
    }
    inFlight += 1;
    try {
      let doc: unknown;
      try {
        doc = JSON.parse((await readBody(req)).toString("utf-8"));
      } catch (err) {
        sendJson(res, 400, { error: err instanceof BadInputError ? err.message : "body is not valid JSON" });
        return;
      }
      if (typeof doc !== "object" || doc === null) {
        sendJson(res, 400, { error: "body must be a JSON object" });
        return;
      }
      if (req.url === "/embed_text") {
        const text = (doc as Record<string, unknown>).text;
        if (typeof text !== "string" || text.length === 0) {
          sendJson(res, 400, { error: "'text' must be a non-empty string" });
          return;
        }
        const { embedding, truncated } = await backend.embedText(text);
        const body: Record<string, unknown> = { embedding, dim: embedding.length };
        if (truncated) body.truncated = true;
        sendJson(res, 200, body);
      } else {
        const b64 = (doc as Record<string, unknown>).png_base64;
        if (typeof b64 !== "string" || b64.length === 0) {
          sendJson(res, 400, { error: "'png_base64' must be a non-empty string" });
          return;
        }
        let png: Buffer;
        try {
          png = Buffer.from(b64, "base64");
          if (png.length === 0) throw new Error("empty");
        } catch {
          sendJson(res, 400, { error: "'png_base64' is not valid base64" });
          return;
        }
        const embedding = await backend.embedImage(png);
        sendJson(res, 200, { embedding, dim: embedding.length });
      }
    } catch (err) {
      if (err instanceof BadInputError) {
        sendJson(res, 400, { error: err.message });
      } else {
        sendJson(res, 500, { error: `model failure: ${(err as Error).message}` });
      }
    } finally {
      inFlight -= 1;
    }
  });
}
