#!/usr/bin/env node
/**
 * Command line entry: `adapter serve ...` runs the detector service,
 * `adapter check ...` probes a running one and exits 0 on a clean round trip.
 */

import * as fs from "node:fs";
import { PNG } from "pngjs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { z } from "zod";
import { protocolRoundtripCheck } from "./client.js";
import { BoxSchema } from "./protocol.js";
import { startServer, ServeMode } from "./server.js";

const ScriptSchema = z.record(z.string(), z.array(BoxSchema));

function loadScript(path: string) {
  const parsed = ScriptSchema.safeParse(
    JSON.parse(fs.readFileSync(path, "utf-8")),
  );
  if (!parsed.success) {
    throw new Error(`script file ${path} is invalid: ${parsed.error.message}`);
  }
  return parsed.data;
}

/** A small synthetic crop for `check` runs without --image. */
function sampleImage(width = 32, height = 24): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const v = Math.round((255 * x) / (width - 1));
      const i = (y * width + x) * 4;
      png.data[i] = png.data[i + 1] = png.data[i + 2] = v;
      png.data[i + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command("serve", "run the detector service", (y) =>
      y
        .option("mode", {
          choices: ["mock", "model"] as const,
          demandOption: true,
        })
        .option("script", {
          type: "string",
          describe: "JSON file mapping segment_id to boxes (mock mode)",
        })
        .option("port", { type: "number", default: 0 })
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("model-id", { type: "number", default: 0 }),
    )
    .command("check", "probe a running service", (y) =>
      y
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("port", { type: "number", demandOption: true })
        .option("image", { type: "string", describe: "PNG file to send" })
        .option("timeout", { type: "number", default: 30_000 }),
    )
    .demandCommand(1)
    .strict()
    .parse();

  const command = argv._[0];
  if (command === "serve") {
    const mode = argv.mode as ServeMode;
    if (mode === "mock" && !argv.script) {
      console.error("serve --mode mock needs --script FILE");
      return 1;
    }
    const server = await startServer({
      mode,
      script: argv.script ? loadScript(argv.script as string) : undefined,
      modelId: argv.modelId as number,
      host: argv.host as string,
      port: argv.port as number,
    });
    console.log(`listening on ${argv.host}:${server.port}`);
    await new Promise<void>((resolve) => {
      process.on("SIGINT", resolve);
      process.on("SIGTERM", resolve);
    });
    await server.close();
    return 0;
  }

  // check
  let image: Buffer;
  let width: number;
  let height: number;
  if (argv.image) {
    image = fs.readFileSync(argv.image as string);
    const decoded = PNG.sync.read(image);
    width = decoded.width;
    height = decoded.height;
  } else {
    width = 32;
    height = 24;
    image = sampleImage(width, height);
  }
  const result = await protocolRoundtripCheck({
    host: argv.host as string,
    port: argv.port as number,
    image,
    width,
    height,
    timeoutMs: argv.timeout as number,
  });
  if (result.pass) {
    console.log(`pass: ${result.response!.boxes!.length} boxes`);
    return 0;
  }
  console.error(`fail: ${result.reason}`);
  return 1;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  },
);
