/** Binary PPM (P6) frames and the multipart stream that carries them. */

export interface Frame {
  width: number;
  height: number;
  /** RGBA bytes ready for ImageData, alpha forced opaque. */
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Parses one P6 image: "P6", three ASCII integers, one whitespace, raw RGB. */
export function decodePpm(bytes: Uint8Array): Frame {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x36) {
    throw new Error("not a P6 ppm");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos += 1;
    let end = pos;
    while (end < bytes.length && !isSpace(bytes[end])) end += 1;
    if (end === pos) throw new Error("truncated ppm header");
    const token = String.fromCharCode(...bytes.subarray(pos, end));
    const value = Number(token);
    if (!Number.isInteger(value) || value <= 0) {
      throw new Error(`bad ppm header field "${token}"`);
    }
    fields.push(value);
    pos = end;
  }
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  pos += 1; // the single whitespace byte that ends the header
  const need = width * height * 3;
  if (bytes.length - pos < need) throw new Error("truncated ppm payload");
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0, j = 0; i < need; i += 3, j += 4) {
    rgba[j] = bytes[pos + i];
    rgba[j + 1] = bytes[pos + i + 1];
    rgba[j + 2] = bytes[pos + i + 2];
    rgba[j + 3] = 255;
  }
  return { width, height, rgba };
}

const BLANK_LINE = [0x0d, 0x0a, 0x0d, 0x0a]; // \r\n\r\n

/**
 * Carves payloads out of a multipart/x-mixed-replace byte stream.
 *
 * Parts look like "--<boundary>\r\nContent-...\r\nContent-Length: N\r\n\r\n"
 * followed by exactly N payload bytes.  Chunk boundaries can fall anywhere,
 * so feed() buffers until a whole part is available.
 */
export class MultipartSplitter {
  private buffer = new Uint8Array(0);

  feed(chunk: Uint8Array): Uint8Array[] {
    const joined = new Uint8Array(this.buffer.length + chunk.length);
    joined.set(this.buffer);
    joined.set(chunk, this.buffer.length);
    this.buffer = joined;

    const parts: Uint8Array[] = [];
    for (;;) {
      const headerEnd = this.findBlankLine();
      if (headerEnd < 0) break;
      const header = String.fromCharCode(...this.buffer.subarray(0, headerEnd));
      const match = /content-length:\s*(\d+)/i.exec(header);
      if (!match) throw new Error("multipart part without Content-Length");
      const length = Number(match[1]);
      const start = headerEnd + BLANK_LINE.length;
      if (this.buffer.length < start + length) break;
      parts.push(this.buffer.slice(start, start + length));
      this.buffer = this.buffer.slice(start + length);
    }
    return parts;
  }

  private findBlankLine(): number {
    const limit = this.buffer.length - BLANK_LINE.length;
    for (let i = 0; i <= limit; i += 1) {
      if (
        this.buffer[i] === BLANK_LINE[0] &&
        this.buffer[i + 1] === BLANK_LINE[1] &&
        this.buffer[i + 2] === BLANK_LINE[2] &&
        this.buffer[i + 3] === BLANK_LINE[3]
      ) {
        return i;
      }
    }
    return -1;
  }
}
