/**
 * Extraction pipeline: dataset -> transforms -> frozen encoder -> OHFS.
 *
 * Output row order is dataset index order regardless of batching. With
 * augment_passes > 1 (train split only), each pass reuses the whole split
 * under a fresh seeded augmentation stream and the passes are concatenated,
 * labels repeating identically.
 */

import { CLASS_NAMES, CifarImage, IMAGE_SIZE, loadSplit } from './cifar10'
import { Encoder } from './backbones'
import { FeatureSet, defaultManifest, writeFeatureFile } from './ohfs'
import { applyTransform, describe, TransformSpec } from './transforms'
import { deriveSeed, makeRng } from './rng'

export interface ExtractConfig {
  backboneId: string
  split: 'train' | 'test'
  dataDir: string
  augmentPasses: number
  seed: number
  outPath: string
  batchSize: number
  /** cap on images per pass; mainly for smoke tests */
  limit?: number
}

export interface ExtractSummary {
  rows: number
  dim: number
  passes: number
  transform: string
}

export async function extractFeatures(config: ExtractConfig,
                                      encoder: Encoder): Promise<ExtractSummary> {
  if (config.augmentPasses < 1) throw new Error('augment_passes must be >= 1')
  const images = loadSplit(config.dataDir, config.split, config.limit)
  if (images.length === 0) throw new Error('no images in split')

  const spec: TransformSpec = {
    augment: config.split === 'train',
    resolution: encoder.spec.resolution,
    mean: encoder.spec.mean,
    std: encoder.spec.std,
  }
  const passes = config.split === 'train' ? config.augmentPasses : 1

  const dim = encoder.spec.dim
  const rows = images.length * passes
  const features = new Float32Array(rows * dim)
  const labels = new BigInt64Array(rows)

  let cursor = 0
  for (let pass = 0; pass < passes; pass++) {
    const rng = makeRng(deriveSeed(config.seed, `augment-pass-${pass}`))
    for (let start = 0; start < images.length; start += config.batchSize) {
      const chunk = images.slice(start, start + config.batchSize)
      const batch = chunk.map((img: CifarImage) =>
        applyTransform(img.pixels, IMAGE_SIZE, spec, rng))
      const embedded = await encoder.embed(batch)
      for (let i = 0; i < chunk.length; i++) {
        if (embedded[i].length !== dim) {
          throw new Error(`encoder emitted width ${embedded[i].length}, expected ${dim}`)
        }
        features.set(embedded[i], cursor * dim)
        labels[cursor] = BigInt(chunk[i].label)
        cursor++
      }
    }
  }

  const set: FeatureSet = {
    features,
    labels,
    n: rows,
    dim,
    manifest: defaultManifest({
      backbone_id: encoder.manifestId,
      split_role: 'raw',
      feature_dim: dim,
      source_dataset: `cifar10-${config.split}[${describe(spec)};passes=${passes}]`,
      extraction_seed: config.seed,
      class_names: CLASS_NAMES,
    }),
  }
  writeFeatureFile(set, config.outPath)
  return { rows, dim, passes, transform: describe(spec) }
}
