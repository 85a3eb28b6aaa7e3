/**
 * Frozen encoder registry.
 *
 * Three encoder families are supported, each with a fixed output width:
 * resnet50 (2048), convnext_tiny (768), clip_vit_b16 (512). Inference runs
 * a TF.js graph model supplied via --weights (a URL or a local
 * model.json path); weights are never updated. When no weights are
 * available, --synthetic selects a deterministic stand-in (seeded random
 * projection of an average-pooled image) with the same output width, so
 * the full pipeline stays testable offline. Synthetic features are tagged
 * in the manifest and are NOT the pretrained embeddings.
 */

import * as tf from '@tensorflow/tfjs'

import { Image } from './transforms'
import { deriveSeed, makeGaussian, makeRng } from './rng'

export interface BackboneSpec {
  id: string
  dim: number
  resolution: number
  mean: number[]
  std: number[]
}

const CIFAR_MEAN = [0.4914, 0.4822, 0.4465]
const CIFAR_STD = [0.2023, 0.1994, 0.201]
const CLIP_MEAN = [0.48145466, 0.4578275, 0.40821073]
const CLIP_STD = [0.26862954, 0.26130258, 0.27577711]

export const BACKBONES: Record<string, BackboneSpec> = {
  resnet50: { id: 'resnet50', dim: 2048, resolution: 224, mean: CIFAR_MEAN, std: CIFAR_STD },
  convnext_tiny: { id: 'convnext_tiny', dim: 768, resolution: 224, mean: CIFAR_MEAN, std: CIFAR_STD },
  clip_vit_b16: { id: 'clip_vit_b16', dim: 512, resolution: 224, mean: CLIP_MEAN, std: CLIP_STD },
}

export interface Encoder {
  spec: BackboneSpec
  /** manifest backbone id; synthetic stand-ins are tagged */
  manifestId: string
  embed(batch: Image[]): Promise<Float32Array[]>
  dispose(): void
}

export function getSpec(backboneId: string): BackboneSpec {
  const spec = BACKBONES[backboneId]
  if (!spec) {
    throw new Error(
      `unknown backbone ${backboneId}; expected one of ${Object.keys(BACKBONES).join(', ')}`,
    )
  }
  return spec
}

function toTensor(batch: Image[]): tf.Tensor4D {
  const { height, width, channels } = batch[0]
  const data = new Float32Array(batch.length * height * width * channels)
  batch.forEach((img, i) => data.set(img.data, i * height * width * channels))
  return tf.tensor4d(data, [batch.length, height, width, channels])
}

class GraphModelEncoder implements Encoder {
  manifestId: string

  constructor(readonly spec: BackboneSpec, private model: tf.GraphModel) {
    this.manifestId = spec.id
  }

  async embed(batch: Image[]): Promise<Float32Array[]> {
    const input = toTensor(batch)
    try {
      let out = this.model.predict(input) as tf.Tensor
      // global-average-pool spatial outputs down to one vector per image
      if (out.rank === 4) out = tf.mean(out, [1, 2])
      const flat = out.reshape([batch.length, -1]) as tf.Tensor2D
      if (flat.shape[1] !== this.spec.dim) {
        throw new Error(
          `${this.spec.id}: model emits width ${flat.shape[1]}, expected ${this.spec.dim}`,
        )
      }
      const values = (await flat.data()) as Float32Array
      const rows: Float32Array[] = []
      for (let i = 0; i < batch.length; i++) {
        rows.push(values.slice(i * this.spec.dim, (i + 1) * this.spec.dim))
      }
      return rows
    } finally {
      input.dispose()
    }
  }

  dispose(): void {
    this.model.dispose()
  }
}

/**
 * Deterministic offline stand-in: average-pool the image to an 8x8x3 grid,
 * then apply a fixed seeded Gaussian projection to the encoder width.
 */
export class SyntheticEncoder implements Encoder {
  manifestId: string
  private readonly grid = 8
  private readonly projection: Float32Array

  constructor(readonly spec: BackboneSpec, seed = 0) {
    this.manifestId = `${spec.id}-synthetic`
    const inputDim = this.grid * this.grid * 3
    const gauss = makeGaussian(makeRng(deriveSeed(seed, `projection-${spec.id}`)))
    this.projection = new Float32Array(inputDim * spec.dim)
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = gauss() / Math.sqrt(inputDim)
    }
  }

  private pool(img: Image): Float32Array {
    const { height, width, channels } = img
    const cell = height / this.grid
    const out = new Float32Array(this.grid * this.grid * channels)
    for (let gy = 0; gy < this.grid; gy++) {
      for (let gx = 0; gx < this.grid; gx++) {
        const y0 = Math.floor(gy * cell)
        const y1 = Math.floor((gy + 1) * cell)
        const x0 = Math.floor(gx * cell)
        const x1 = Math.floor((gx + 1) * cell)
        for (let c = 0; c < channels; c++) {
          let acc = 0
          for (let y = y0; y < y1; y++) {
            for (let x = x0; x < x1; x++) acc += img.data[(y * width + x) * channels + c]
          }
          out[(gy * this.grid + gx) * channels + c] = acc / ((y1 - y0) * (x1 - x0))
        }
      }
    }
    return out
  }

  async embed(batch: Image[]): Promise<Float32Array[]> {
    const inputDim = this.grid * this.grid * 3
    return batch.map((img) => {
      const pooled = this.pool(img)
      const row = new Float32Array(this.spec.dim)
      for (let j = 0; j < this.spec.dim; j++) {
        let acc = 0
        for (let i = 0; i < inputDim; i++) acc += pooled[i] * this.projection[i * this.spec.dim + j]
        row[j] = acc
      }
      return row
    })
  }

  dispose(): void {}
}

export async function loadEncoder(backboneId: string, options: {
  weights?: string
  synthetic?: boolean
  seed?: number
}): Promise<Encoder> {
  const spec = getSpec(backboneId)
  if (options.synthetic) return new SyntheticEncoder(spec, options.seed ?? 0)
  if (!options.weights) {
    throw new Error(
      `${backboneId}: supply --weights <url-or-model.json> for pretrained inference, ` +
      'or --synthetic for the deterministic offline stand-in',
    )
  }
  const source = options.weights.startsWith('http')
    ? options.weights
    : `file://${options.weights}`
  let model: tf.GraphModel
  try {
    model = await tf.loadGraphModel(source)
  } catch (err) {
    throw new Error(`${backboneId}: failed to load weights from ${options.weights}: ${err}`)
  }
  return new GraphModelEncoder(spec, model)
}
