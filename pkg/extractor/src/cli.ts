#!/usr/bin/env node
/**
 * voxelenc-extract: stimuli to VEMF feature matrices.
 *
 * The stimulus file is either a JSON array (strings, or objects with
 * "image" and/or "caption" keys) or a plain text file with one path or
 * caption per line.
 */

import * as fs from 'node:fs'
import { fileURLToPath } from 'node:url'
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { FAMILIES } from './models.js'
import { StimulusInput, extract, layerSweepExtract } from './extract.js'

function loadStimuli(file: string): StimulusInput[] {
  const text = fs.readFileSync(file, 'utf-8')
  if (file.endsWith('.json')) {
    return JSON.parse(text)
  }
  return text
    .split('\n')
    .map(line => line.trim())
    .filter(line => line.length > 0)
}

const common = {
  family: {
    choices: FAMILIES,
    demandOption: true as const,
    describe: 'representation family',
  },
  model: { type: 'string' as const, demandOption: true as const, describe: 'model name' },
  stimuli: {
    type: 'string' as const,
    demandOption: true as const,
    describe: 'stimulus list file (JSON array or one entry per line)',
  },
  mode: {
    choices: ['pooled', 'patches', 'avgpool'] as const,
    describe: 'representation mode; default depends on family',
  },
  seed: { type: 'number' as const, default: 0, describe: 'weight seed for the stand-in model' },
  'batch-size': { type: 'number' as const, default: 16 },
  permissive: {
    type: 'boolean' as const,
    default: false,
    describe: 'skip undecodable stimuli instead of failing',
  },
  'patch-mode': {
    choices: ['mean', 'concat'] as const,
    default: 'mean' as const,
    describe: 'how patch embeddings become one row',
  },
  'caption-mode': {
    choices: ['first', 'mean'] as const,
    default: 'first' as const,
    describe: 'how multiple captions per stimulus are combined',
  },
  dtype: { choices: ['float32', 'float64'] as const, default: 'float32' as const },
}

function fatal(e: unknown): never {
  console.error(`error: ${(e as Error).message}`)
  process.exit(1)
}

function jobFromArgs(argv: Record<string, unknown>): Record<string, unknown> {
  return {
    family: argv.family,
    model: argv.model,
    mode: argv.mode,
    stimuli: loadStimuli(argv.stimuli as string),
    seed: argv.seed,
    batchSize: argv['batch-size'],
    permissive: argv.permissive,
    patchMode: argv['patch-mode'],
    captionMode: argv['caption-mode'],
    dtype: argv.dtype,
  }
}

export function main(args: string[]): Promise<unknown> {
  return yargs(args)
    .scriptName('voxelenc-extract')
    .command(
      '$0',
      'extract one feature matrix',
      y =>
        y.options({
          ...common,
          layer: { type: 'string', default: 'last', describe: 'layer name, 1-based index, or "last"' },
          out: { type: 'string', demandOption: true, describe: 'output VEMF path' },
        }),
      argv => {
        try {
          const res = extract({ ...jobFromArgs(argv), layer: argv.layer, out: argv.out })
          console.log(JSON.stringify(res))
        } catch (e) {
          fatal(e)
        }
      }
    )
    .command(
      'sweep',
      'extract every requested layer plus a manifest fragment',
      y =>
        y.options({
          ...common,
          layers: {
            type: 'string',
            default: 'all',
            describe: '"all" or a comma-separated list of layer names',
          },
          'out-dir': { type: 'string', demandOption: true, describe: 'output directory' },
        }),
      argv => {
        try {
          const layers = argv.layers === 'all' ? ('all' as const) : (argv.layers as string).split(',')
          const res = layerSweepExtract(jobFromArgs(argv), layers, argv['out-dir'] as string)
          console.log(JSON.stringify(res))
        } catch (e) {
          fatal(e)
        }
      }
    )
    .demandCommand(0)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? (err as Error).message}`)
      process.exit(1)
    })
    .parseAsync()
}

const isDirectRun =
  process.argv[1] !== undefined && fileURLToPath(import.meta.url) === fs.realpathSync(process.argv[1])
if (isDirectRun) {
  main(hideBin(process.argv)).catch(e => {
    console.error(`error: ${(e as Error).message}`)
    process.exit(1)
  })
}
