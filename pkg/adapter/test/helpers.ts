import * as net from "node:net";
import { PNG } from "pngjs";

/** Uniform gray PNG, value in 0..255. */
export function grayPng(width: number, height: number, value = 200): Buffer {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = png.data[i * 4 + 1] = png.data[i * 4 + 2] = value;
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** Gray background with one solid dark bar, end-exclusive coordinates. */
export function barPng(
  width: number,
  height: number,
  bar: { x1: number; y1: number; x2: number; y2: number },
  bg = 230,
  ink = 40,
): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const inside = x >= bar.x1 && x < bar.x2 && y >= bar.y1 && y < bar.y2;
      const v = inside ? ink : bg;
      const i = (y * width + x) * 4;
      png.data[i] = png.data[i + 1] = png.data[i + 2] = v;
      png.data[i + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

/** Well-formed request body; override fields to break it on purpose. */
export function makeRequest(
  overrides: Record<string, unknown> = {},
  image?: Buffer,
): Record<string, unknown> {
  const png = image ?? grayPng(16, 12);
  return {
    request_id: "req-1",
    image: png.toString("base64"),
    meta: { segment_id: "seg-0", width: 16, height: 12 },
    ...overrides,
  };
}

/**
 * One TCP connection that exchanges newline-delimited payloads. Strictly
 * sequential: call send, await the reply, then send again.
 */
export class LineClient {
  private buffer = "";
  private waiter: ((line: string) => void) | null = null;

  private constructor(private socket: net.Socket) {
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => {
      this.buffer += chunk;
      this.drain();
    });
  }

  static connect(port: number, host = "127.0.0.1"): Promise<LineClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      socket.once("error", reject);
      socket.once("connect", () => resolve(new LineClient(socket)));
    });
  }

  send(payload: string): Promise<string> {
    return new Promise((resolve) => {
      this.waiter = resolve;
      this.socket.write(payload);
      this.drain();
    });
  }

  close(): void {
    this.socket.destroy();
  }

  private drain(): void {
    if (!this.waiter) return;
    const newline = this.buffer.indexOf("\n");
    if (newline < 0) return;
    const line = this.buffer.slice(0, newline);
    this.buffer = this.buffer.slice(newline + 1);
    const waiter = this.waiter;
    this.waiter = null;
    waiter(line);
  }
}

/** A server that accepts connections and never writes anything back. */
export function silentServer(): Promise<{ port: number; close(): void }> {
  const server = net.createServer(() => {});
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      resolve({ port, close: () => server.close() });
    });
  });
}

/** A server that replies to every line with a fixed payload. */
export function cannedServer(
  reply: string,
): Promise<{ port: number; close(): void }> {
  const server = net.createServer((socket) => {
    socket.setEncoding("utf-8");
    let buffer = "";
    socket.on("data", (chunk: string) => {
      buffer += chunk;
      while (buffer.indexOf("\n") >= 0) {
        buffer = buffer.slice(buffer.indexOf("\n") + 1);
        socket.write(reply);
      }
    });
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      resolve({ port, close: () => server.close() });
    });
  });
}
