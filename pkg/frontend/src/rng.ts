/** Small deterministic RNG (sfc32) so extraction runs repeat exactly. */

export type Rng = () => number

export function makeRng(seed: number): Rng {
  let a = 0x9e3779b9 ^ seed
  let b = 0x243f6a88 ^ (seed << 13) ^ (seed >>> 7)
  let c = 0xb7e15162 ^ (seed * 0x85ebca6b)
  let d = seed >>> 0
  // warm up past correlated initial state
  const rng = () => {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0
    const t = (a + b) | 0
    a = b ^ (b >>> 9)
    b = (c + (c << 3)) | 0
    c = (c << 21) | (c >>> 11)
    d = (d + 1) | 0
    const out = (t + d) | 0
    c = (c + out) | 0
    return (out >>> 0) / 4294967296
  }
  for (let i = 0; i < 12; i++) rng()
  return rng
}

/** Standard normal via Box-Muller. */
export function makeGaussian(rng: Rng): Rng {
  let spare: number | null = null
  return () => {
    if (spare !== null) {
      const v = spare
      spare = null
      return v
    }
    let u = 0
    let v = 0
    while (u === 0) u = rng()
    v = rng()
    const mag = Math.sqrt(-2.0 * Math.log(u))
    spare = mag * Math.sin(2.0 * Math.PI * v)
    return mag * Math.cos(2.0 * Math.PI * v)
  }
}

/** Derive an independent stream seed from a base seed and a stage name. */
export function deriveSeed(seed: number, stage: string): number {
  let h = 2166136261 ^ seed
  for (let i = 0; i < stage.length; i++) {
    h ^= stage.charCodeAt(i)
    h = Math.imul(h, 16777619)
  }
  return h >>> 0
}
