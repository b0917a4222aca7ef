import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { decodePpm, MultipartSplitter } from "../src/ppm.js";

const GOLDEN = new Uint8Array(readFileSync(new URL("./fixtures/frame_pan10_tilt0_counter7.ppm", import.meta.url)));
const TWO_PARTS = new Uint8Array(readFileSync(new URL("./fixtures/camera_two_parts.bin", import.meta.url)));

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("decodePpm", () => {
  it("matches the captured server frame pixel for pixel", () => {
    const frame = decodePpm(GOLDEN);
    expect(frame.width).toBe(160);
    expect(frame.height).toBe(120);
    const body = GOLDEN.subarray(GOLDEN.length - 160 * 120 * 3);
    for (let i = 0; i < 160 * 120; i++) {
      expect(frame.rgba[4 * i + 0]).toBe(body[3 * i + 0]);
      expect(frame.rgba[4 * i + 1]).toBe(body[3 * i + 1]);
      expect(frame.rgba[4 * i + 2]).toBe(body[3 * i + 2]);
      expect(frame.rgba[4 * i + 3]).toBe(255);
    }
  });

  it("decodes the pan=10 tilt=0 counter=7 pattern", () => {
    // Guards the fixture itself: channels follow the camera's pixel rule.
    const frame = decodePpm(GOLDEN);
    for (let y = 0; y < frame.height; y++) {
      for (let x = 0; x < frame.width; x++) {
        const i = 4 * (y * frame.width + x);
        expect(frame.rgba[i + 0]).toBe((x + 10) % 256);
        expect(frame.rgba[i + 1]).toBe((y + 152) % 256);
        expect(frame.rgba[i + 2]).toBe(7);
      }
    }
  });

  it.each([
    ["P5\n2 2\n255\n", "magic"],
    ["P6\n2 2\n127\n", "maxval"],
  ])("rejects header %s", (header) => {
    const bytes = new Uint8Array([...header].map((c) => c.charCodeAt(0)).concat(new Array(12).fill(0)));
    expect(() => decodePpm(bytes)).toThrow();
  });

  it("rejects truncated pixel data", () => {
    expect(() => decodePpm(GOLDEN.subarray(0, GOLDEN.length - 1))).toThrow();
  });
});

describe("MultipartSplitter", () => {
  function partsOf(chunks: Uint8Array[]): Uint8Array[] {
    const splitter = new MultipartSplitter();
    const parts: Uint8Array[] = [];
    for (const chunk of chunks) parts.push(...splitter.feed(chunk));
    return parts;
  }

  it("splits a whole stream fed at once", () => {
    const parts = partsOf([TWO_PARTS]);
    expect(parts.length).toBe(2);
    expect(parts[0]).toEqual(GOLDEN);
  });

  it("is chunk boundary independent", () => {
    const rand = mulberry32(1234);
    for (let round = 0; round < 25; round++) {
      const chunks: Uint8Array[] = [];
      let at = 0;
      while (at < TWO_PARTS.length) {
        const size = 1 + Math.floor(rand() * 4096);
        chunks.push(TWO_PARTS.subarray(at, at + size));
        at += size;
      }
      const parts = partsOf(chunks);
      expect(parts.length).toBe(2);
      expect(parts[0]).toEqual(GOLDEN);
      expect(decodePpm(parts[1]).width).toBe(160);
    }
  });

  it("second frame shifts the gradients by the new pan and tilt", () => {
    // Part two was rendered at pan=15, tilt=-3.5: red moves +5 columns and
    // green lands on round-half-up(-3.5) = -3 against part one.
    const [first, second] = partsOf([TWO_PARTS]);
    const a = decodePpm(first);
    const b = decodePpm(second);
    for (let x = 0; x < a.width; x++) {
      expect(b.rgba[4 * x + 0]).toBe((a.rgba[4 * x + 0] + 5) % 256);
    }
    for (let y = 0; y < a.height; y++) {
      const i = 4 * (y * a.width);
      expect(b.rgba[i + 1]).toBe((a.rgba[i + 1] + 256 - 3) % 256);
    }
    expect(b.rgba[2]).toBe(8);
  });

  it("rejects a part without a content length", () => {
    const raw = [..."--frame\r\nContent-Type: image/x-portable-pixmap\r\n\r\n"].map((c) => c.charCodeAt(0));
    const splitter = new MultipartSplitter();
    expect(() => splitter.feed(new Uint8Array(raw))).toThrow(/content-length/i);
  });
});
