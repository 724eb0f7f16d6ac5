/** Small deterministic PRNG (mulberry32) so model weights and synthetic
 * datasets are reproducible across runs and platforms. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Uniform(-scale, scale) array. */
export function uniformArray(
  rand: () => number,
  length: number,
  scale: number,
): Float32Array {
  const out = new Float32Array(length)
  for (let i = 0; i < length; i++) {
    out[i] = (2 * rand() - 1) * scale
  }
  return out
}
