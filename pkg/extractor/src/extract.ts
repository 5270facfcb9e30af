/**
 * Extraction jobs: stimuli in, VEMF feature matrices out.
 *
 * A job names a model family, a stand-in model, a layer selector and a
 * representation mode, plus the stimulus list. Rows are written in
 * stimulus-list order regardless of batch size. Decode failures are
 * hard errors unless the job is permissive, in which case the row is
 * skipped and its index logged.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import { z } from 'zod'

import { FAMILIES, Family, Mode, PatchMode, StandInModel, DecodedStimulus } from './models.js'
import { Dtype, Matrix, writeMatrix } from './vemf.js'

export const StimulusSchema = z.union([
  z.string(),
  z.object({
    image: z.string().optional(),
    caption: z.union([z.string(), z.array(z.string()).nonempty()]).optional(),
  }),
])

export type StimulusInput = z.infer<typeof StimulusSchema>

export const JobSchema = z.object({
  family: z.enum(FAMILIES as [Family, ...Family[]]),
  model: z.string().min(1),
  layer: z.string().default('last'),
  mode: z.enum(['pooled', 'patches', 'avgpool']).optional(),
  stimuli: z.array(StimulusSchema).nonempty(),
  out: z.string().min(1),
  seed: z.number().int().nonnegative().default(0),
  batchSize: z.number().int().positive().default(16),
  permissive: z.boolean().default(false),
  patchMode: z.enum(['mean', 'concat']).default('mean'),
  captionMode: z.enum(['first', 'mean']).default('first'),
  dtype: z.enum(['float32', 'float64']).default('float32'),
})

export type ExtractionJob = z.infer<typeof JobSchema>

const DEFAULT_MODE: Record<Family, Mode> = {
  cnn: 'avgpool',
  'text-transformer': 'pooled',
  'image-transformer': 'pooled',
  'late-fusion': 'pooled',
  'multimodal-transformer': 'pooled',
}

export function resolveMode(job: { family: Family; mode?: Mode }): Mode {
  const mode = job.mode ?? DEFAULT_MODE[job.family]
  if (mode === 'patches' && job.family !== 'image-transformer') {
    throw new Error(`mode "patches" is only valid for image-transformer, not ${job.family}`)
  }
  if (mode === 'avgpool' && job.family !== 'cnn') {
    throw new Error(`mode "avgpool" is only valid for cnn, not ${job.family}`)
  }
  return mode
}

class DecodeError extends Error {}

function decodeStimulus(model: StandInModel, stim: StimulusInput): DecodedStimulus {
  let image: string | undefined
  let captions: string[] | undefined
  if (typeof stim === 'string') {
    if (model.needsImage() && model.needsCaption()) {
      throw new DecodeError(
        `family ${model.family} needs both an image and a caption; use {"image": ..., "caption": ...}`
      )
    }
    if (model.needsImage()) image = stim
    else captions = [stim]
  } else {
    image = stim.image
    captions =
      stim.caption === undefined ? undefined : Array.isArray(stim.caption) ? stim.caption : [stim.caption]
  }
  if (model.needsImage() && image === undefined) {
    throw new DecodeError(`family ${model.family} needs an image path`)
  }
  if (model.needsCaption() && captions === undefined) {
    throw new DecodeError(`family ${model.family} needs a caption`)
  }
  const out: DecodedStimulus = { captions }
  if (model.needsImage()) {
    let bytes: Buffer
    try {
      bytes = fs.readFileSync(image!)
    } catch (e) {
      throw new DecodeError(`cannot read image ${image}: ${(e as Error).message}`)
    }
    if (bytes.length === 0) {
      throw new DecodeError(`empty image file ${image}`)
    }
    out.imageBytes = bytes
  }
  return out
}

function stimulusRow(
  model: StandInModel,
  decoded: DecodedStimulus,
  layerIdx: number,
  mode: Mode,
  patchMode: PatchMode,
  captionMode: 'first' | 'mean'
): number[] {
  const captions = decoded.captions
  if (!model.needsCaption() || !captions || captions.length === 1 || captionMode === 'first') {
    const one: DecodedStimulus = { ...decoded, captions: captions ? [captions[0]] : undefined }
    return model.featureRow(one, layerIdx, mode, patchMode)
  }
  // all-caption mean: one forward pass per caption, averaged
  let acc: number[] | null = null
  for (const cap of captions) {
    const row = model.featureRow({ ...decoded, captions: [cap] }, layerIdx, mode, patchMode)
    if (acc === null) acc = row.slice()
    else for (let j = 0; j < row.length; j++) acc[j] += row[j]
  }
  return acc!.map(x => x / captions.length)
}

export interface ExtractResult {
  file: string
  rows: number
  cols: number
  skipped: number[] // stimulus indices dropped in permissive mode
}

export function extract(input: unknown): ExtractResult {
  const job = JobSchema.parse(input)
  const mode = resolveMode(job)
  if (job.family === 'late-fusion' && job.layer !== 'last') {
    throw new Error('late-fusion concatenates the last layer of each branch; layer must be "last"')
  }
  const model = new StandInModel(job.family, job.model, job.seed)
  const layerIdx = model.resolveLayer(job.layer)
  const expectCols = model.featureDim(layerIdx, mode, job.patchMode)

  const rows: number[][] = []
  const skipped: number[] = []
  for (let start = 0; start < job.stimuli.length; start += job.batchSize) {
    const batch = job.stimuli.slice(start, start + job.batchSize)
    for (let b = 0; b < batch.length; b++) {
      const index = start + b
      let decoded: DecodedStimulus
      try {
        decoded = decodeStimulus(model, batch[b])
      } catch (e) {
        if (job.permissive && e instanceof DecodeError) {
          console.error(`skipping stimulus ${index}: ${(e as Error).message}`)
          skipped.push(index)
          continue
        }
        throw new Error(`stimulus ${index}: ${(e as Error).message}`)
      }
      const row = stimulusRow(model, decoded, layerIdx, mode, job.patchMode, job.captionMode)
      if (row.length !== expectCols) {
        throw new Error(`stimulus ${index}: got ${row.length} features, expected ${expectCols}`)
      }
      rows.push(row)
    }
  }
  if (rows.length === 0) {
    throw new Error('no stimuli survived decoding')
  }

  const mat: Matrix = {
    rows: rows.length,
    cols: expectCols,
    dtype: job.dtype as Dtype,
    data: Float64Array.from(rows.flat()),
  }
  writeMatrix(mat, job.out)
  return { file: job.out, rows: mat.rows, cols: mat.cols, skipped }
}

export interface SweepResult {
  files: string[]
  fragment: string
  layers: string[]
}

/** One VEMF per layer, named <model>_L<k>.vemf with k the 1-based layer
 * index, plus a manifest fragment listing the feature entries in order. */
export function layerSweepExtract(input: unknown, layers: 'all' | string[], outDir: string): SweepResult {
  const base = JobSchema.omit({ out: true }).parse(input)
  if (base.family === 'late-fusion') {
    throw new Error('late-fusion has a single fused representation; sweep the branches instead')
  }
  const model = new StandInModel(base.family, base.model, base.seed)
  const names = model.layerNames()
  const picked = layers === 'all' ? names : layers
  const indices = picked.map(sel => model.resolveLayer(sel))

  fs.mkdirSync(outDir, { recursive: true })
  const files: string[] = []
  const entries: { model: string; layer: string; path: string }[] = []
  for (const idx of indices) {
    const file = path.join(outDir, `${base.model}_L${idx + 1}.vemf`)
    extract({ ...base, layer: names[idx], out: file })
    files.push(file)
    entries.push({ model: base.model, layer: names[idx], path: path.basename(file) })
  }

  const fragment = path.join(outDir, `${base.model}_features.json`)
  const doc = {
    features: entries,
    generator: {
      family: base.family,
      seed: base.seed,
      mode: resolveMode(base),
      patch_mode: base.patchMode,
      caption_mode: base.captionMode,
    },
  }
  fs.writeFileSync(fragment, JSON.stringify(doc, null, 2) + '\n')
  return { files, fragment, layers: indices.map(i => names[i]) }
}
