import { describe, expect, it } from "vitest";
import { Box } from "../src/protocol.js";
import {
  createDetectorServer,
  ServerOptions,
  startServer,
} from "../src/server.js";
import { barPng, grayPng, LineClient, makeRequest } from "./helpers.js";

const SCRIPT: Record<string, Box[]> = {
  "seg-0": [
    { x1: 2, y1: 3, x2: 10, y2: 8, prob: 0.75 },
    { x1: 1, y1: 1, x2: 4, y2: 4, prob: 0.2 },
  ],
  "seg-1": [],
};

async function withServer(
  options: ServerOptions,
  fn: (client: LineClient) => Promise<void>,
): Promise<void> {
  const server = await startServer(options);
  const client = await LineClient.connect(server.port);
  try {
    await fn(client);
  } finally {
    client.close();
    await server.close();
  }
}

function send(client: LineClient, body: unknown): Promise<string> {
  return client.send(JSON.stringify(body) + "\n");
}

describe("mock mode", () => {
  it("returns the scripted boxes for a segment verbatim", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const reply = JSON.parse(await send(client, makeRequest()));
      expect(reply).toEqual({
        request_id: "req-1",
        model_id: 0,
        boxes: SCRIPT["seg-0"],
      });
    });
  });

  it("returns empty boxes for a segment the script does not mention", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const request = makeRequest({
        meta: { segment_id: "seg-99", width: 16, height: 12 },
      });
      const reply = JSON.parse(await send(client, request));
      expect(reply.boxes).toEqual([]);
      expect(reply.error).toBeUndefined();
    });
  });

  it("stamps responses with the configured model id", async () => {
    await withServer(
      { mode: "mock", script: SCRIPT, modelId: 7 },
      async (client) => {
        const reply = JSON.parse(await send(client, makeRequest()));
        expect(reply.model_id).toBe(7);
      },
    );
  });

  it("refuses to start without a script", () => {
    expect(() => createDetectorServer({ mode: "mock" })).toThrow(/script/);
  });

  it("answers identical requests identically", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const line = JSON.stringify(makeRequest()) + "\n";
      const first = await client.send(line);
      const second = await client.send(line);
      expect(second).toBe(first);
    });
  });

  it("handles several requests over one connection", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      for (const segment of ["seg-0", "seg-1", "seg-0"]) {
        const request = makeRequest({
          request_id: `req-${segment}`,
          meta: { segment_id: segment, width: 16, height: 12 },
        });
        const reply = JSON.parse(await send(client, request));
        expect(reply.request_id).toBe(`req-${segment}`);
        expect(reply.boxes).toEqual(SCRIPT[segment]);
      }
    });
  });
});

describe("malformed requests", () => {
  it("answers unparseable JSON with an error and keeps serving", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const garbage = JSON.parse(await client.send("{this is not json\n"));
      expect(garbage.request_id).toBe("unknown");
      expect(garbage.error).toMatch(/bad request/);
      expect(garbage.boxes).toBeUndefined();

      const followup = JSON.parse(await send(client, makeRequest()));
      expect(followup.boxes).toEqual(SCRIPT["seg-0"]);
    });
  });

  it("echoes the request_id when the image is not a PNG", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const request = makeRequest({
        request_id: "req-busted",
        image: Buffer.from("definitely not a png").toString("base64"),
      });
      const reply = JSON.parse(await send(client, request));
      expect(reply.request_id).toBe("req-busted");
      expect(reply.error).toMatch(/bad request/);

      const followup = JSON.parse(await send(client, makeRequest()));
      expect(followup.error).toBeUndefined();
    });
  });

  it("rejects a request whose meta disagrees with the decoded size", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const request = makeRequest({
        meta: { segment_id: "seg-0", width: 99, height: 12 },
      });
      const reply = JSON.parse(await send(client, request));
      expect(reply.request_id).toBe("req-1");
      expect(reply.error).toMatch(/99x12/);
    });
  });

  it("rejects a request missing required fields", async () => {
    await withServer({ mode: "mock", script: SCRIPT }, async (client) => {
      const reply = JSON.parse(
        await client.send('{"request_id": "req-thin"}\n'),
      );
      expect(reply.request_id).toBe("req-thin");
      expect(reply.error).toMatch(/bad request/);
    });
  });
});

describe("model mode", () => {
  it("returns no boxes for a blank crop", async () => {
    await withServer({ mode: "model" }, async (client) => {
      const reply = JSON.parse(
        await send(client, makeRequest({}, grayPng(16, 12))),
      );
      expect(reply.boxes).toEqual([]);
    });
  });

  it("boxes a dark bar at its exact bounds", async () => {
    const bar = { x1: 10, y1: 12, x2: 28, y2: 18 };
    await withServer({ mode: "model" }, async (client) => {
      const request = makeRequest(
        { meta: { segment_id: "seg-0", width: 40, height: 30 } },
        barPng(40, 30, bar),
      );
      const reply = JSON.parse(await send(client, request));
      expect(reply.error).toBeUndefined();
      expect(reply.boxes).toHaveLength(1);
      const box = reply.boxes[0];
      expect([box.x1, box.y1, box.x2, box.y2]).toEqual([10, 12, 28, 18]);
      expect(box.prob).toBeGreaterThan(0);
      expect(box.prob).toBeLessThanOrEqual(1);
    });
  });

  it("is deterministic for the same crop", async () => {
    const image = barPng(40, 30, { x1: 5, y1: 5, x2: 20, y2: 25 });
    await withServer({ mode: "model" }, async (client) => {
      const line =
        JSON.stringify(
          makeRequest(
            { meta: { segment_id: "seg-0", width: 40, height: 30 } },
            image,
          ),
        ) + "\n";
      expect(await client.send(line)).toBe(await client.send(line));
    });
  });
});
