/**
 * Portable seeded random numbers, matching the voxelenc Python stream.
 *
 * SplitMix64 as a pure counter: output i (1-based) is
 * mix64(seed + i * 0x9E3779B97F4A7C15) mod 2^64. Uniforms map a word to
 * (0, 1] via ((w >> 11) + 1) * 2^-53; both are bit-exact across
 * languages. Gaussians use Box-Muller on consecutive uniform pairs and
 * agree with the Python stream up to libm rounding.
 */

const MASK = (1n << 64n) - 1n
const GAMMA = 0x9e3779b97f4a7c15n
const MIX1 = 0xbf58476d1ce4e5b9n
const MIX2 = 0x94d049bb133111ebn
const U53 = 2 ** -53

const FNV_OFFSET = 0xcbf29ce484222325n
const FNV_PRIME = 0x100000001b3n

export function mix64(z: bigint): bigint {
  z &= MASK
  z = ((z ^ (z >> 30n)) * MIX1) & MASK
  z = ((z ^ (z >> 27n)) * MIX2) & MASK
  return (z ^ (z >> 31n)) & MASK
}

/** FNV-1a over the '/'-joined UTF-8 context, xored into the seed and
 * finalized with mix64. Same contexts, same sub-seed as the Python side. */
export function deriveSeed(seed: bigint | number, ...parts: string[]): bigint {
  let h = FNV_OFFSET
  const bytes = Buffer.from(parts.join('/'), 'utf-8')
  for (const b of bytes) {
    h = ((h ^ BigInt(b)) * FNV_PRIME) & MASK
  }
  return mix64((BigInt(seed) & MASK) ^ h)
}

/** Deterministic 64-bit hash of raw bytes (FNV-1a), for content seeds. */
export function hashBytes(data: Buffer): bigint {
  let h = FNV_OFFSET
  for (const b of data) {
    h = ((h ^ BigInt(b)) * FNV_PRIME) & MASK
  }
  return h
}

export class PortableRng {
  private seed: bigint
  private pos = 0n

  constructor(seed: bigint | number) {
    this.seed = BigInt(seed) & MASK
  }

  words(n: number): bigint[] {
    const out: bigint[] = new Array(n)
    for (let i = 0; i < n; i++) {
      this.pos += 1n
      out[i] = mix64((this.seed + this.pos * GAMMA) & MASK)
    }
    return out
  }

  /** n doubles in (0, 1]. */
  uniforms(n: number): number[] {
    return this.words(n).map(w => Number((w >> 11n) + 1n) * U53)
  }

  /** n standard normal doubles via Box-Muller. */
  gaussians(n: number): number[] {
    if (n === 0) return []
    const pairs = (n + 1) >> 1
    const u = this.uniforms(2 * pairs)
    const out: number[] = new Array(2 * pairs)
    for (let i = 0; i < pairs; i++) {
      const r = Math.sqrt(-2.0 * Math.log(u[2 * i]))
      const theta = 2.0 * Math.PI * u[2 * i + 1]
      out[2 * i] = r * Math.cos(theta)
      out[2 * i + 1] = r * Math.sin(theta)
    }
    return out.slice(0, n)
  }
}
