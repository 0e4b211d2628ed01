/**
 * Wire protocol types for the detector service.
 *
 * Transport is newline-delimited JSON over TCP: each side writes exactly one
 * JSON object per line, UTF-8 encoded. A request carries a base64 PNG crop of
 * one segment; the response echoes the request_id and returns either boxes or
 * an error, never both.
 */

import { z } from "zod";

/** Axis-aligned detection in region-local pixel coordinates. */
export const BoxSchema = z
  .object({
    x1: z.number(),
    y1: z.number(),
    x2: z.number(),
    y2: z.number(),
    prob: z.number().min(0).max(1),
  })
  .refine((b) => b.x2 >= b.x1 && b.y2 >= b.y1, {
    message: "box corners out of order",
  });

export type Box = z.infer<typeof BoxSchema>;

export const DetectRequestSchema = z.object({
  request_id: z.string().min(1),
  image: z.string().min(1),
  meta: z.object({
    segment_id: z.string(),
    width: z.number().int().positive(),
    height: z.number().int().positive(),
  }),
});

export type DetectRequest = z.infer<typeof DetectRequestSchema>;

export const DetectResponseSchema = z
  .object({
    request_id: z.string(),
    model_id: z.number().int().nonnegative(),
    boxes: z.array(BoxSchema).optional(),
    error: z.string().optional(),
  })
  .refine((r) => (r.boxes === undefined) !== (r.error === undefined), {
    message: "response must carry exactly one of boxes or error",
  });

export type DetectResponse = z.infer<typeof DetectResponseSchema>;

/** Serialize one protocol message as a single line. */
export function encodeLine(message: DetectRequest | DetectResponse): string {
  return JSON.stringify(message) + "\n";
}

/**
 * Check that every box lies inside a width x height region.
 * Returns the index of the first offender, or -1.
 */
export function firstOutOfBounds(
  boxes: Box[],
  width: number,
  height: number,
): number {
  return boxes.findIndex(
    (b) => b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height,
  );
}
