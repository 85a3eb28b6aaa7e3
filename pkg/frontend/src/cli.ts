#!/usr/bin/env node
/**
 * Command line:
 *   feature-extract extract --backbone resnet50 --split test --data-dir DIR \
 *       --out features.ohfs [--weights URL|model.json | --synthetic] \
 *       [--augment N] [--seed S] [--batch-size 64] [--limit N]
 *   feature-extract verify PATH
 */

import { parseArgs } from 'node:util'

import { loadEncoder } from './backbones'
import { extractFeatures } from './extract'
import { formatReport, verifyFeatureFile } from './verify'

function usage(): never {
  console.error('usage: feature-extract extract --backbone B --split train|test ' +
    '--data-dir DIR --out PATH [--weights W | --synthetic] [--augment N] ' +
    '[--seed S] [--batch-size N] [--limit N]')
  console.error('       feature-extract verify PATH')
  process.exit(2)
}

async function runExtract(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      backbone: { type: 'string' },
      split: { type: 'string' },
      'data-dir': { type: 'string' },
      out: { type: 'string' },
      weights: { type: 'string' },
      synthetic: { type: 'boolean', default: false },
      augment: { type: 'string', default: '1' },
      seed: { type: 'string', default: '0' },
      'batch-size': { type: 'string', default: '64' },
      limit: { type: 'string' },
    },
  })
  const backbone = values.backbone
  const split = values.split
  const dataDir = values['data-dir']
  const out = values.out
  if (!backbone || !split || !dataDir || !out) usage()
  if (split !== 'train' && split !== 'test') usage()

  const seed = parseInt(values.seed!, 10)
  const encoder = await loadEncoder(backbone!, {
    weights: values.weights,
    synthetic: values.synthetic,
    seed,
  })
  try {
    const summary = await extractFeatures({
      backboneId: backbone!,
      split,
      dataDir: dataDir!,
      augmentPasses: parseInt(values.augment!, 10),
      seed,
      outPath: out!,
      batchSize: parseInt(values['batch-size']!, 10),
      limit: values.limit !== undefined ? parseInt(values.limit, 10) : undefined,
    }, encoder)
    console.log(`wrote ${summary.rows} x ${summary.dim} features to ${out}`)
    console.log(`transform: ${summary.transform} (passes=${summary.passes})`)
    return 0
  } finally {
    encoder.dispose()
  }
}

function runVerify(argv: string[]): number {
  if (argv.length !== 1) usage()
  const report = verifyFeatureFile(argv[0])
  console.log(formatReport(argv[0], report))
  return report.ok ? 0 : 1
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2)
  try {
    if (command === 'extract') return await runExtract(rest)
    if (command === 'verify') return runVerify(rest)
    usage()
  } catch (err) {
    console.error(`feature-extract: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

main().then((code) => process.exit(code))
