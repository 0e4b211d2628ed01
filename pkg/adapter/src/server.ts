/**
 * NDJSON-over-TCP detector service.
 *
 * Stateless across requests: every line is parsed, validated, and answered
 * independently, and a malformed request produces an error response (with the
 * request_id echoed when one could be recovered) instead of dropping the
 * connection. One request is handled at a time per connection; clients may
 * open as many connections as they like.
 */

import * as net from "node:net";
import { decodeLuminance, detectDarkComponents } from "./detector.js";
import {
  Box,
  DetectRequestSchema,
  DetectResponse,
  encodeLine,
} from "./protocol.js";

export type ServeMode = "mock" | "model";

export interface ServerOptions {
  mode: ServeMode;
  /** segment_id -> scripted boxes; required in mock mode. */
  script?: Record<string, Box[]>;
  modelId?: number;
  host?: string;
  port?: number;
}

export interface RunningServer {
  port: number;
  close(): Promise<void>;
}

export function createDetectorServer(options: ServerOptions): net.Server {
  if (options.mode === "mock" && options.script === undefined) {
    throw new Error("mock mode needs a script");
  }
  const modelId = options.modelId ?? 0;

  const server = net.createServer((socket) => {
    let buffer = "";
    socket.setEncoding("utf-8");
    socket.on("error", () => socket.destroy());
    socket.on("data", (chunk: string) => {
      buffer += chunk;
      let newline: number;
      while ((newline = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, newline);
        buffer = buffer.slice(newline + 1);
        const response = handleLine(line, options, modelId);
        socket.write(encodeLine(response));
      }
    });
  });
  return server;
}

/** Bind the server and resolve once it is accepting connections. */
export function startServer(options: ServerOptions): Promise<RunningServer> {
  const server = createDetectorServer(options);
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(options.port ?? 0, options.host ?? "127.0.0.1", () => {
      const address = server.address() as net.AddressInfo;
      resolve({
        port: address.port,
        close: () =>
          new Promise<void>((done, fail) =>
            server.close((err) => (err ? fail(err) : done())),
          ),
      });
    });
  });
}

function handleLine(
  line: string,
  options: ServerOptions,
  modelId: number,
): DetectResponse {
  let requestId = "unknown";
  try {
    const raw: unknown = JSON.parse(line);
    if (typeof raw === "object" && raw !== null) {
      const id = (raw as Record<string, unknown>).request_id;
      if (typeof id === "string" && id.length > 0) requestId = id;
    }
    const request = DetectRequestSchema.parse(raw);

    const lum = decodeLuminance(Buffer.from(request.image, "base64"));
    if (lum.width !== request.meta.width || lum.height !== request.meta.height) {
      return {
        request_id: request.request_id,
        model_id: modelId,
        error: `meta says ${request.meta.width}x${request.meta.height}, image is ${lum.width}x${lum.height}`,
      };
    }

    const boxes =
      options.mode === "mock"
        ? options.script![request.meta.segment_id] ?? []
        : detectDarkComponents(lum);
    return { request_id: request.request_id, model_id: modelId, boxes };
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    return {
      request_id: requestId,
      model_id: modelId,
      error: `bad request: ${reason}`,
    };
  }
}
