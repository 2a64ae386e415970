/** Mean absolute difference per RGB channel between two 8-bit pixel buffers. */

export interface PixelBuffer {
  /** RGBA (stride 4) or RGB (stride 3), row-major. */
  data: Uint8Array | Uint8ClampedArray;
  channels: 3 | 4;
}

/** Returns [r, g, b] means normalized to [0, 1]. Alpha is ignored. */
export function meanAbsDiffPerChannel(a: PixelBuffer, b: PixelBuffer): [number, number, number] {
  const pixelsA = a.data.length / a.channels;
  const pixelsB = b.data.length / b.channels;
  if (!Number.isInteger(pixelsA) || !Number.isInteger(pixelsB)) {
    throw new Error("buffer length is not a multiple of the channel stride");
  }
  if (pixelsA !== pixelsB) {
    throw new Error(`pixel counts differ: ${pixelsA} vs ${pixelsB}`);
  }
  let sumR = 0;
  let sumG = 0;
  let sumB = 0;
  for (let p = 0; p < pixelsA; p++) {
    const ia = p * a.channels;
    const ib = p * b.channels;
    sumR += Math.abs((a.data[ia] as number) - (b.data[ib] as number));
    sumG += Math.abs((a.data[ia + 1] as number) - (b.data[ib + 1] as number));
    sumB += Math.abs((a.data[ia + 2] as number) - (b.data[ib + 2] as number));
  }
  const n = pixelsA * 255;
  return [sumR / n, sumG / n, sumB / n];
}
