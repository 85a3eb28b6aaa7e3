import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'

import { IMAGE_SIZE, RECORD_BYTES } from '../src/cifar10'

/** Deterministic CIFAR-format batch: `perClass` records for each of 10 labels. */
export function makeBatchBuffer(perClass: number): Buffer {
  const records = perClass * 10
  const buf = Buffer.alloc(records * RECORD_BYTES)
  let offset = 0
  for (let i = 0; i < records; i++) {
    const label = i % 10
    buf[offset] = label
    for (let c = 0; c < 3; c++) {
      for (let p = 0; p < IMAGE_SIZE * IMAGE_SIZE; p++) {
        // label-dependent gradient so classes are distinguishable
        buf[offset + 1 + c * IMAGE_SIZE * IMAGE_SIZE + p] =
          (label * 24 + c * 7 + (p % 13) * 3 + (i % 5)) % 256
      }
    }
    offset += RECORD_BYTES
  }
  return buf
}

export function makeDataDir(perClass: number): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'cifar-fixture-'))
  const batch = makeBatchBuffer(perClass)
  for (const name of ['data_batch_1.bin', 'data_batch_2.bin', 'data_batch_3.bin',
                      'data_batch_4.bin', 'data_batch_5.bin', 'test_batch.bin']) {
    fs.writeFileSync(path.join(dir, name), batch)
  }
  return dir
}

export function tmpFile(name: string): string {
  return path.join(fs.mkdtempSync(path.join(os.tmpdir(), 'ohfs-')), name)
}
