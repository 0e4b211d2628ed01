/**
 * The bundled "model": a dark-component detector over the decoded crop.
 *
 * It stands in for a real pretrained text detector so the serve --mode model
 * path can be exercised end to end without GPU weights. Pixels darker than
 * the crop mean by a margin become ink; 8-connected ink components are
 * reported as boxes scored by their edge-to-ink ratio (thin strokes score
 * high, solid masses low), mirroring how the orchestrator's builtin detector
 * ranks candidates.
 */

import { PNG } from "pngjs";
import type { Box } from "./protocol.js";

const INK_MARGIN = 0.1;
const EDGE_STEP = 0.1;
const MIN_SIDE = 3;

/** Decoded 8-bit crop as row-major luminance in [0, 1]. */
export interface Luminance {
  width: number;
  height: number;
  values: Float64Array;
}

/** Decode a PNG buffer to luminance. Throws on malformed data. */
export function decodeLuminance(data: Buffer): Luminance {
  const png = PNG.sync.read(data);
  const values = new Float64Array(png.width * png.height);
  for (let i = 0; i < values.length; i++) {
    const r = png.data[i * 4] / 255;
    const g = png.data[i * 4 + 1] / 255;
    const b = png.data[i * 4 + 2] / 255;
    values[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return { width: png.width, height: png.height, values };
}

export function detectDarkComponents(lum: Luminance): Box[] {
  const { width, height, values } = lum;
  const n = width * height;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += values[i];
  mean /= n;

  const ink = new Uint8Array(n);
  for (let i = 0; i < n; i++) ink[i] = values[i] < mean - INK_MARGIN ? 1 : 0;

  const labels = new Int32Array(n).fill(-1);
  const boxes: Box[] = [];
  const stack: number[] = [];
  let next = 0;

  for (let start = 0; start < n; start++) {
    if (!ink[start] || labels[start] >= 0) continue;
    const label = next++;
    let minX = width, minY = height, maxX = -1, maxY = -1;
    let inkCount = 0;
    let edgeCount = 0;
    stack.push(start);
    labels[start] = label;
    while (stack.length > 0) {
      const idx = stack.pop()!;
      const y = Math.floor(idx / width);
      const x = idx - y * width;
      inkCount++;
      if (isEdge(values, width, height, x, y)) edgeCount++;
      if (x < minX) minX = x;
      if (y < minY) minY = y;
      if (x > maxX) maxX = x;
      if (y > maxY) maxY = y;
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          const nx = x + dx;
          const ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          const nidx = ny * width + nx;
          if (ink[nidx] && labels[nidx] < 0) {
            labels[nidx] = label;
            stack.push(nidx);
          }
        }
      }
    }
    const w = maxX - minX + 1;
    const h = maxY - minY + 1;
    if (w < MIN_SIDE || h < MIN_SIDE) continue;
    boxes.push({
      x1: minX,
      y1: minY,
      x2: maxX + 1,
      y2: maxY + 1,
      prob: Math.min(1, edgeCount / Math.max(inkCount, 1)),
    });
  }

  boxes.sort((a, b) => a.y1 - b.y1 || a.x1 - b.x1);
  return boxes;
}

function isEdge(
  values: Float64Array,
  width: number,
  height: number,
  x: number,
  y: number,
): boolean {
  const here = values[y * width + x];
  const right = x + 1 < width ? values[y * width + x + 1] : here;
  const down = y + 1 < height ? values[(y + 1) * width + x] : here;
  return Math.abs(right - here) > EDGE_STEP || Math.abs(down - here) > EDGE_STEP;
}
