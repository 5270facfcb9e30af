/**
 * Tiny deterministic stand-in models, one per representation family.
 *
 * Real runs would load pretrained checkpoints; here every weight is
 * drawn from the portable RNG seeded by (seed, family, model, layer),
 * so tests need no downloads and the same job always produces the same
 * matrix. Images contribute through a content hash of their bytes,
 * captions through per-token embeddings, so changing a stimulus changes
 * its row and nothing else.
 */

import { PortableRng, deriveSeed, hashBytes } from './rng.js'

export type Family =
  | 'cnn'
  | 'text-transformer'
  | 'image-transformer'
  | 'late-fusion'
  | 'multimodal-transformer'

export type Mode = 'pooled' | 'patches' | 'avgpool'
export type PatchMode = 'mean' | 'concat'

export const FAMILIES: Family[] = [
  'cnn',
  'text-transformer',
  'image-transformer',
  'late-fusion',
  'multimodal-transformer',
]

interface FamilySpec {
  layers: string[]
  dims: number[] // output dim per layer
  baseDim: number // input row width
  needsImage: boolean
  needsCaption: boolean
}

// stand-in stacks are shallow on purpose; shape handling is what matters
const SPECS: Record<Exclude<Family, 'late-fusion'>, FamilySpec> = {
  cnn: {
    layers: ['MaxPool1', 'MaxPool2', 'MaxPool3', 'FC6', 'FC7'],
    dims: [8, 8, 12, 16, 16],
    baseDim: 8,
    needsImage: true,
    needsCaption: false,
  },
  'text-transformer': {
    layers: ['L1', 'L2', 'L3', 'L4'],
    dims: [16, 16, 16, 16],
    baseDim: 16,
    needsImage: false,
    needsCaption: true,
  },
  'image-transformer': {
    layers: ['L1', 'L2', 'L3', 'L4'],
    dims: [16, 16, 16, 16],
    baseDim: 16,
    needsImage: true,
    needsCaption: false,
  },
  'multimodal-transformer': {
    layers: ['L1', 'L2', 'L3', 'L4'],
    dims: [16, 16, 16, 16],
    baseDim: 16,
    needsImage: true,
    needsCaption: true,
  },
}

export const IMAGE_PATCHES = 9
export const DETECTOR_REGIONS = 4

export interface DecodedStimulus {
  imageBytes?: Buffer
  captions?: string[]
}

function matForward(rows: number[][], w: number[][]): number[][] {
  const out: number[][] = []
  const dIn = w.length
  const dOut = w[0].length
  for (const row of rows) {
    const next = new Array<number>(dOut)
    for (let j = 0; j < dOut; j++) {
      let acc = 0
      for (let i = 0; i < dIn; i++) acc += row[i] * w[i][j]
      next[j] = Math.tanh(acc)
    }
    out.push(next)
  }
  return out
}

function columnMeans(rows: number[][]): number[] {
  const d = rows[0].length
  const out = new Array<number>(d).fill(0)
  for (const row of rows) for (let j = 0; j < d; j++) out[j] += row[j]
  for (let j = 0; j < d; j++) out[j] /= rows.length
  return out
}

function rowsFromSeed(seed: bigint, count: number, dim: number, ...ctx: string[]): number[][] {
  const out: number[][] = []
  for (let i = 0; i < count; i++) {
    const rng = new PortableRng(deriveSeed(seed, ...ctx, String(i)))
    out.push(rng.gaussians(dim))
  }
  return out
}

export class StandInModel {
  readonly family: Family
  readonly name: string
  readonly seed: number
  private spec: FamilySpec
  private weights: number[][][] | null = null

  constructor(family: Family, name: string, seed: number) {
    this.family = family
    this.name = name
    this.seed = seed
    if (family === 'late-fusion') {
      // fusion has no stack of its own; branches are built on demand
      this.spec = { layers: ['last'], dims: [0], baseDim: 0, needsImage: true, needsCaption: true }
    } else {
      this.spec = SPECS[family]
    }
  }

  layerNames(): string[] {
    return [...this.spec.layers]
  }

  needsImage(): boolean {
    return this.spec.needsImage
  }

  needsCaption(): boolean {
    return this.spec.needsCaption
  }

  /** Accepts a layer label, a 1-based index, or "last"; returns 0-based index. */
  resolveLayer(selector: string): number {
    const layers = this.spec.layers
    if (selector === 'last') return layers.length - 1
    const byName = layers.indexOf(selector)
    if (byName >= 0) return byName
    if (/^\d+$/.test(selector)) {
      const k = parseInt(selector, 10)
      if (k >= 1 && k <= layers.length) return k - 1
    }
    throw new Error(
      `model ${this.name}: unknown layer ${JSON.stringify(selector)} (has ${layers.join(', ')})`
    )
  }

  private layerWeights(): number[][][] {
    if (this.weights) return this.weights
    const w: number[][][] = []
    let dIn = this.spec.baseDim
    for (let k = 0; k < this.spec.layers.length; k++) {
      const dOut = this.spec.dims[k]
      const rng = new PortableRng(deriveSeed(this.seed, this.family, this.name, this.spec.layers[k]))
      const flat = rng.gaussians(dIn * dOut)
      const scale = 1 / Math.sqrt(dIn)
      const mat: number[][] = []
      for (let i = 0; i < dIn; i++) {
        mat.push(flat.slice(i * dOut, (i + 1) * dOut).map(x => x * scale))
      }
      w.push(mat)
      dIn = dOut
    }
    this.weights = w
    return w
  }

  private baseRows(stim: DecodedStimulus): number[][] {
    const d = this.spec.baseDim
    switch (this.family) {
      case 'cnn':
      case 'image-transformer': {
        const content = hashBytes(stim.imageBytes!)
        return rowsFromSeed(content, IMAGE_PATCHES, d, 'patch')
      }
      case 'text-transformer':
        return this.tokenRows(stim.captions![0], d)
      case 'multimodal-transformer': {
        const content = hashBytes(stim.imageBytes!)
        const regions = rowsFromSeed(content, DETECTOR_REGIONS, d, 'region')
        return regions.concat(this.tokenRows(stim.captions![0], d))
      }
      default:
        throw new Error(`no base rows for family ${this.family}`)
    }
  }

  private tokenRows(caption: string, dim: number): number[][] {
    const tokens = caption.trim().split(/\s+/).filter(t => t.length > 0)
    if (tokens.length === 0) {
      throw new Error('empty caption')
    }
    return tokens.map(tok => {
      const rng = new PortableRng(deriveSeed(this.seed, this.family, this.name, 'embed', tok))
      return rng.gaussians(dim)
    })
  }

  private activations(stim: DecodedStimulus, layerIdx: number): number[][] {
    let rows = this.baseRows(stim)
    const weights = this.layerWeights()
    for (let k = 0; k <= layerIdx; k++) {
      rows = matForward(rows, weights[k])
    }
    return rows
  }

  /** One feature row for one decoded stimulus. */
  featureRow(stim: DecodedStimulus, layerIdx: number, mode: Mode, patchMode: PatchMode): number[] {
    if (this.family === 'late-fusion') {
      // concatenation of the two branch representations, last layer each
      const vision = new StandInModel('cnn', this.name, this.seed)
      const text = new StandInModel('text-transformer', this.name, this.seed)
      const a = vision.featureRow(stim, vision.layerNames().length - 1, 'avgpool', 'mean')
      const b = text.featureRow(stim, text.layerNames().length - 1, 'pooled', 'mean')
      return a.concat(b)
    }
    const acts = this.activations(stim, layerIdx)
    if (mode === 'patches' && patchMode === 'concat') {
      return acts.flat()
    }
    // pooled, avgpool, and patches/mean all average over positions
    return columnMeans(acts)
  }

  /** Output width for a given layer and mode, before any stimulus is seen. */
  featureDim(layerIdx: number, mode: Mode, patchMode: PatchMode): number {
    if (this.family === 'late-fusion') {
      const cnnDims = SPECS.cnn.dims
      const textDims = SPECS['text-transformer'].dims
      return cnnDims[cnnDims.length - 1] + textDims[textDims.length - 1]
    }
    const d = this.spec.dims[layerIdx]
    if (mode === 'patches' && patchMode === 'concat') return IMAGE_PATCHES * d
    return d
  }
}
