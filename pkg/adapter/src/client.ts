/**
 * Protocol conformance probe.
 *
 * Sends one request to a running detector service and checks everything the
 * orchestrator will later rely on: the reply parses against the response
 * schema, echoes the request_id, and keeps boxes inside the crop. One
 * request per connection, default 30 s timeout, no retries.
 */

import * as crypto from "node:crypto";
import * as net from "node:net";
import {
  DetectResponse,
  DetectResponseSchema,
  encodeLine,
  firstOutOfBounds,
} from "./protocol.js";

export const DEFAULT_TIMEOUT_MS = 30_000;

export interface RoundtripOptions {
  host: string;
  port: number;
  /** PNG to send; callers provide a crop of known size. */
  image: Buffer;
  width: number;
  height: number;
  segmentId?: string;
  timeoutMs?: number;
}

export interface RoundtripResult {
  pass: boolean;
  reason?: string;
  response?: DetectResponse;
}

/** Run one request/response cycle and validate the reply. */
export async function protocolRoundtripCheck(
  options: RoundtripOptions,
): Promise<RoundtripResult> {
  const segmentId = options.segmentId ?? "seg-check";
  const requestId = `${segmentId}#${crypto.randomUUID()}`;
  const request = {
    request_id: requestId,
    image: options.image.toString("base64"),
    meta: {
      segment_id: segmentId,
      width: options.width,
      height: options.height,
    },
  };

  let line: string;
  try {
    line = await sendLine(
      options.host,
      options.port,
      encodeLine(request),
      options.timeoutMs ?? DEFAULT_TIMEOUT_MS,
    );
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    return { pass: false, reason };
  }

  let parsed: DetectResponse;
  try {
    parsed = DetectResponseSchema.parse(JSON.parse(line));
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    return { pass: false, reason: `response failed schema: ${reason}` };
  }
  if (parsed.request_id !== requestId) {
    return { pass: false, reason: "request_id echo mismatch", response: parsed };
  }
  if (parsed.error !== undefined) {
    return { pass: false, reason: `server error: ${parsed.error}`, response: parsed };
  }
  const offender = firstOutOfBounds(parsed.boxes!, options.width, options.height);
  if (offender >= 0) {
    return {
      pass: false,
      reason: `box ${offender} outside the ${options.width}x${options.height} crop`,
      response: parsed,
    };
  }
  return { pass: true, response: parsed };
}

function sendLine(
  host: string,
  port: number,
  payload: string,
  timeoutMs: number,
): Promise<string> {
  return new Promise((resolve, reject) => {
    const socket = net.createConnection({ host, port });
    let buffer = "";
    let settled = false;

    const fail = (reason: string) => {
      if (settled) return;
      settled = true;
      socket.destroy();
      reject(new Error(reason));
    };

    socket.setTimeout(timeoutMs, () => fail("timeout"));
    socket.on("error", (err) => fail(err.message));
    socket.on("close", () => fail("connection closed before a full reply"));
    socket.on("connect", () => socket.write(payload));
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => {
      buffer += chunk;
      const newline = buffer.indexOf("\n");
      if (newline >= 0 && !settled) {
        settled = true;
        socket.end();
        resolve(buffer.slice(0, newline));
      }
    });
  });
}
