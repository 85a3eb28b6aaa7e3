/**
 * CIFAR-10 binary-format loader.
 *
 * Each record is 1 label byte followed by 3072 pixel bytes (1024 red,
 * 1024 green, 1024 blue; each plane row-major 32x32). The train split is
 * data_batch_1.bin .. data_batch_5.bin, the test split is test_batch.bin.
 */

import * as fs from 'fs'
import * as path from 'path'

export const IMAGE_SIZE = 32
export const CHANNELS = 3
export const RECORD_BYTES = 1 + IMAGE_SIZE * IMAGE_SIZE * CHANNELS

export const CLASS_NAMES = [
  'airplane', 'automobile', 'bird', 'cat', 'deer',
  'dog', 'frog', 'horse', 'ship', 'truck',
]

export interface CifarImage {
  /** HWC uint8 pixels, 32 x 32 x 3 */
  pixels: Uint8Array
  label: number
}

export function decodeRecords(buf: Buffer): CifarImage[] {
  if (buf.length % RECORD_BYTES !== 0) {
    throw new Error(`batch size ${buf.length} is not a multiple of ${RECORD_BYTES}`)
  }
  const out: CifarImage[] = []
  for (let offset = 0; offset < buf.length; offset += RECORD_BYTES) {
    const label = buf[offset]
    if (label > 9) throw new Error(`label ${label} out of range at offset ${offset}`)
    const pixels = new Uint8Array(IMAGE_SIZE * IMAGE_SIZE * CHANNELS)
    // planes to interleaved HWC
    for (let c = 0; c < CHANNELS; c++) {
      const plane = offset + 1 + c * IMAGE_SIZE * IMAGE_SIZE
      for (let p = 0; p < IMAGE_SIZE * IMAGE_SIZE; p++) {
        pixels[p * CHANNELS + c] = buf[plane + p]
      }
    }
    out.push({ pixels, label })
  }
  return out
}

export function batchFiles(split: 'train' | 'test'): string[] {
  if (split === 'train') {
    return [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`)
  }
  return ['test_batch.bin']
}

/**
 * Load a split from a directory holding the binary batch files (either
 * directly or under a cifar-10-batches-bin/ subdirectory).
 */
export function loadSplit(dataDir: string, split: 'train' | 'test',
                          limit?: number): CifarImage[] {
  let base = dataDir
  if (!fs.existsSync(path.join(base, batchFiles(split)[0]))) {
    const nested = path.join(dataDir, 'cifar-10-batches-bin')
    if (fs.existsSync(path.join(nested, batchFiles(split)[0]))) base = nested
  }
  const images: CifarImage[] = []
  for (const name of batchFiles(split)) {
    const file = path.join(base, name)
    if (!fs.existsSync(file)) {
      throw new Error(`missing batch file ${file}; place the binary dataset under ${dataDir}`)
    }
    images.push(...decodeRecords(fs.readFileSync(file)))
    if (limit !== undefined && images.length >= limit) break
  }
  return limit !== undefined ? images.slice(0, limit) : images
}

export function classCounts(labels: Iterable<number | bigint>): number[] {
  const counts = new Array(10).fill(0)
  for (const label of labels) {
    const v = Number(label)
    if (v >= 0 && v < 10) counts[v] += 1
  }
  return counts
}
