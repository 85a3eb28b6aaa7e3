/**
 * Image transforms on plain typed arrays (HWC float32).
 *
 * Train-time augmentation is the usual CIFAR recipe: zero-pad by 4, take a
 * random 32x32 crop, flip horizontally with probability 1/2. Both splits
 * are then resized (bilinear, half-pixel centers) to the encoder's input
 * resolution and normalized per channel.
 */

import { Rng } from './rng'

export interface Image {
  data: Float32Array
  height: number
  width: number
  channels: number
}

export function toFloat(pixels: Uint8Array, height: number, width: number,
                        channels: number): Image {
  const data = new Float32Array(pixels.length)
  for (let i = 0; i < pixels.length; i++) data[i] = pixels[i] / 255.0
  return { data, height, width, channels }
}

export function padAndRandomCrop(img: Image, pad: number, rng: Rng): Image {
  const { height, width, channels } = img
  const top = Math.floor(rng() * (2 * pad + 1))
  const left = Math.floor(rng() * (2 * pad + 1))
  const out = new Float32Array(height * width * channels)
  for (let y = 0; y < height; y++) {
    const srcY = y + top - pad
    if (srcY < 0 || srcY >= height) continue // zero padding
    for (let x = 0; x < width; x++) {
      const srcX = x + left - pad
      if (srcX < 0 || srcX >= width) continue
      for (let c = 0; c < channels; c++) {
        out[(y * width + x) * channels + c] =
          img.data[(srcY * width + srcX) * channels + c]
      }
    }
  }
  return { data: out, height, width, channels }
}

export function maybeHorizontalFlip(img: Image, rng: Rng): Image {
  if (rng() >= 0.5) return img
  const { height, width, channels } = img
  const out = new Float32Array(img.data.length)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        out[(y * width + x) * channels + c] =
          img.data[(y * width + (width - 1 - x)) * channels + c]
      }
    }
  }
  return { data: out, height, width, channels }
}

export function resizeBilinear(img: Image, outHeight: number, outWidth: number): Image {
  const { height, width, channels } = img
  if (outHeight === height && outWidth === width) return img
  const out = new Float32Array(outHeight * outWidth * channels)
  const scaleY = height / outHeight
  const scaleX = width / outWidth
  for (let y = 0; y < outHeight; y++) {
    const srcY = Math.min(Math.max((y + 0.5) * scaleY - 0.5, 0), height - 1)
    const y0 = Math.floor(srcY)
    const y1 = Math.min(y0 + 1, height - 1)
    const wy = srcY - y0
    for (let x = 0; x < outWidth; x++) {
      const srcX = Math.min(Math.max((x + 0.5) * scaleX - 0.5, 0), width - 1)
      const x0 = Math.floor(srcX)
      const x1 = Math.min(x0 + 1, width - 1)
      const wx = srcX - x0
      for (let c = 0; c < channels; c++) {
        const p00 = img.data[(y0 * width + x0) * channels + c]
        const p01 = img.data[(y0 * width + x1) * channels + c]
        const p10 = img.data[(y1 * width + x0) * channels + c]
        const p11 = img.data[(y1 * width + x1) * channels + c]
        out[(y * outWidth + x) * channels + c] =
          p00 * (1 - wy) * (1 - wx) + p01 * (1 - wy) * wx +
          p10 * wy * (1 - wx) + p11 * wy * wx
      }
    }
  }
  return { data: out, height: outHeight, width: outWidth, channels }
}

export function normalize(img: Image, mean: number[], std: number[]): Image {
  const { channels } = img
  const out = new Float32Array(img.data.length)
  for (let i = 0; i < img.data.length; i++) {
    const c = i % channels
    out[i] = (img.data[i] - mean[c]) / std[c]
  }
  return { ...img, data: out }
}

export interface TransformSpec {
  augment: boolean
  resolution: number
  mean: number[]
  std: number[]
}

export function describe(spec: TransformSpec): string {
  const aug = spec.augment ? 'pad4-crop32+hflip,' : ''
  return `${aug}resize${spec.resolution},normalize(${spec.mean.map((v) => v.toFixed(4)).join('/')})`
}

/** Full train- or test-time pipeline for one image. */
export function applyTransform(pixels: Uint8Array, size: number,
                               spec: TransformSpec, rng: Rng): Image {
  let img = toFloat(pixels, size, size, 3)
  if (spec.augment) {
    img = padAndRandomCrop(img, 4, rng)
    img = maybeHorizontalFlip(img, rng)
  }
  img = resizeBilinear(img, spec.resolution, spec.resolution)
  return normalize(img, spec.mean, spec.std)
}
