/**
 * OHFS binary feature files, matching the evaluation engine's reader.
 *
 * Layout, little-endian:
 *   magic "OHFS" | version u16 = 1 | dtype u8 = 1 (f32) | reserved u8 |
 *   N u64 | d u64 | features N*d f32 row-major | labels N i64
 *
 * A JSON manifest sidecar lives at `<path>.manifest.json`.
 */

import * as fs from 'fs'

export const OHFS_MAGIC = 'OHFS'
export const OHFS_VERSION = 1
export const DTYPE_F32 = 1
const HEADER_BYTES = 24

export type SplitRole = 'id_train' | 'id_test' | 'ood_test' | 'raw'

export interface Manifest {
  backbone_id: string
  split_role: SplitRole
  feature_dim: number
  source_dataset: string
  extraction_seed: number
  class_names: string[] | null
}

export interface FeatureSet {
  /** n * dim values, row-major */
  features: Float32Array
  labels: BigInt64Array
  n: number
  dim: number
  manifest: Manifest
}

export class OhfsError extends Error {}

export function defaultManifest(partial: Partial<Manifest> = {}): Manifest {
  return {
    backbone_id: 'unknown',
    split_role: 'raw',
    feature_dim: 0,
    source_dataset: 'unknown',
    extraction_seed: 0,
    class_names: null,
    ...partial,
  }
}

export function encodeFeatureFile(set: FeatureSet): Buffer {
  const { n, dim, features, labels } = set
  if (dim < 1) throw new OhfsError('feature dimension must be >= 1')
  if (features.length !== n * dim) {
    throw new OhfsError(`features length ${features.length} != ${n}*${dim}`)
  }
  if (labels.length !== n) {
    throw new OhfsError(`labels length ${labels.length} != row count ${n}`)
  }
  for (let i = 0; i < features.length; i++) {
    if (!Number.isFinite(features[i])) {
      throw new OhfsError(`non-finite feature value at index ${i}`)
    }
  }

  const buf = Buffer.alloc(HEADER_BYTES + n * dim * 4 + n * 8)
  buf.write(OHFS_MAGIC, 0, 'ascii')
  buf.writeUInt16LE(OHFS_VERSION, 4)
  buf.writeUInt8(DTYPE_F32, 6)
  buf.writeUInt8(0, 7)
  buf.writeBigUInt64LE(BigInt(n), 8)
  buf.writeBigUInt64LE(BigInt(dim), 16)
  Buffer.from(features.buffer, features.byteOffset, features.byteLength)
    .copy(buf, HEADER_BYTES)
  Buffer.from(labels.buffer, labels.byteOffset, labels.byteLength)
    .copy(buf, HEADER_BYTES + n * dim * 4)
  return buf
}

/** Atomic write of the feature file plus its manifest sidecar. */
export function writeFeatureFile(set: FeatureSet, path: string): void {
  const payload = encodeFeatureFile(set)
  const tmp = path + '.tmp'
  fs.writeFileSync(tmp, payload)
  fs.renameSync(tmp, path)

  const manifest: Manifest = { ...set.manifest, feature_dim: set.dim }
  // sorted keys so reruns are byte-identical
  const ordered = Object.fromEntries(
    Object.entries(manifest).sort(([a], [b]) => (a < b ? -1 : 1)),
  )
  fs.writeFileSync(path + '.manifest.json', JSON.stringify(ordered))
}

export function readFeatureFile(path: string): FeatureSet {
  const buf = fs.readFileSync(path)
  if (buf.length < 4 || buf.toString('ascii', 0, 4) !== OHFS_MAGIC) {
    throw new OhfsError(`${path}: not an OHFS file`)
  }
  if (buf.length < HEADER_BYTES) throw new OhfsError(`${path}: header cut short`)
  const version = buf.readUInt16LE(4)
  if (version !== OHFS_VERSION) {
    throw new OhfsError(`${path}: version ${version}, expected ${OHFS_VERSION}`)
  }
  if (buf.readUInt8(6) !== DTYPE_F32) {
    throw new OhfsError(`${path}: unsupported dtype code ${buf.readUInt8(6)}`)
  }
  const n = Number(buf.readBigUInt64LE(8))
  const dim = Number(buf.readBigUInt64LE(16))
  if (dim < 1) throw new OhfsError(`${path}: header dimension ${dim} < 1`)

  const body = buf.length - HEADER_BYTES
  const needFeat = n * dim * 4
  if (body < needFeat) {
    throw new OhfsError(`${path}: feature payload needs ${needFeat} bytes, ${body} present`)
  }
  if (body - needFeat !== n * 8) {
    throw new OhfsError(`${path}: label payload is ${body - needFeat} bytes, expected ${n * 8}`)
  }

  const features = new Float32Array(n * dim)
  for (let i = 0; i < n * dim; i++) features[i] = buf.readFloatLE(HEADER_BYTES + i * 4)
  const labels = new BigInt64Array(n)
  for (let i = 0; i < n; i++) labels[i] = buf.readBigInt64LE(HEADER_BYTES + needFeat + i * 8)

  let manifest = defaultManifest({ feature_dim: dim })
  const sidecar = path + '.manifest.json'
  if (fs.existsSync(sidecar)) {
    manifest = { ...manifest, ...JSON.parse(fs.readFileSync(sidecar, 'utf-8')) }
    if (manifest.feature_dim !== dim) {
      throw new OhfsError(
        `${path}: manifest feature_dim ${manifest.feature_dim} != header ${dim}`,
      )
    }
  }
  return { features, labels, n, dim, manifest }
}
