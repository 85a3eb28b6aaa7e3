import { execFileSync } from 'child_process'
import * as fs from 'fs'

import { describe, expect, it } from 'vitest'

import {
  FeatureSet,
  OhfsError,
  defaultManifest,
  encodeFeatureFile,
  readFeatureFile,
  writeFeatureFile,
} from '../src/ohfs'
import { tmpFile } from './fixtures'

function toySet(n = 4, dim = 3): FeatureSet {
  const features = new Float32Array(n * dim)
  for (let i = 0; i < features.length; i++) features[i] = Math.fround(i * 0.25 - 1)
  const labels = new BigInt64Array(n)
  for (let i = 0; i < n; i++) labels[i] = BigInt(i % 3)
  return {
    features, labels, n, dim,
    manifest: defaultManifest({ backbone_id: 'toy', feature_dim: dim, source_dataset: 'fixture' }),
  }
}

function pythonReadsOhfs(): boolean {
  try {
    execFileSync('python3', ['-c', 'import ohz.featstore'], { stdio: 'pipe' })
    return true
  } catch {
    return false
  }
}

describe('ohfs round trip', () => {
  it('reads back exactly what it wrote', () => {
    const set = toySet()
    const path = tmpFile('a.ohfs')
    writeFeatureFile(set, path)
    const back = readFeatureFile(path)
    expect(back.n).toBe(set.n)
    expect(back.dim).toBe(set.dim)
    expect(Array.from(back.features)).toEqual(Array.from(set.features))
    expect(Array.from(back.labels)).toEqual(Array.from(set.labels))
    expect(back.manifest.backbone_id).toBe('toy')
  })

  it('handles the empty set', () => {
    const set: FeatureSet = {
      features: new Float32Array(0),
      labels: new BigInt64Array(0),
      n: 0, dim: 5,
      manifest: defaultManifest({ feature_dim: 5 }),
    }
    const path = tmpFile('empty.ohfs')
    writeFeatureFile(set, path)
    const back = readFeatureFile(path)
    expect(back.n).toBe(0)
    expect(back.dim).toBe(5)
  })

  it('two encodes are byte-identical', () => {
    const set = toySet()
    expect(encodeFeatureFile(set).equals(encodeFeatureFile(set))).toBe(true)
  })
})

describe('ohfs validation', () => {
  it('rejects non-finite features before writing', () => {
    const set = toySet()
    set.features[2] = Number.NaN
    const path = tmpFile('nan.ohfs')
    expect(() => writeFeatureFile(set, path)).toThrow(OhfsError)
    expect(fs.existsSync(path)).toBe(false)
  })

  it('rejects bad magic', () => {
    const path = tmpFile('bad.ohfs')
    fs.writeFileSync(path, Buffer.from('NOPE' + '\0'.repeat(40)))
    expect(() => readFeatureFile(path)).toThrow(/not an OHFS file/)
  })

  it('rejects truncated payloads', () => {
    const set = toySet()
    const path = tmpFile('trunc.ohfs')
    writeFeatureFile(set, path)
    const raw = fs.readFileSync(path)
    fs.writeFileSync(path, raw.subarray(0, raw.length - set.n * 8 - 3))
    expect(() => readFeatureFile(path)).toThrow(/payload/)
  })

  it('rejects label-count mismatches', () => {
    const set = toySet()
    const path = tmpFile('labels.ohfs')
    writeFeatureFile(set, path)
    const raw = fs.readFileSync(path)
    fs.writeFileSync(path, raw.subarray(0, raw.length - 8))
    expect(() => readFeatureFile(path)).toThrow(/label payload/)
  })

  it('rejects manifest dimension mismatch', () => {
    const set = toySet()
    const path = tmpFile('dim.ohfs')
    writeFeatureFile(set, path)
    const sidecar = path + '.manifest.json'
    const manifest = JSON.parse(fs.readFileSync(sidecar, 'utf-8'))
    manifest.feature_dim = 99
    fs.writeFileSync(sidecar, JSON.stringify(manifest))
    expect(() => readFeatureFile(path)).toThrow(/feature_dim/)
  })
})

describe('cross-language interchange', () => {
  it.skipIf(!pythonReadsOhfs())('python evaluation engine reads our files', () => {
    const set = toySet(6, 4)
    const path = tmpFile('bridge.ohfs')
    writeFeatureFile(set, path)
    const script = [
      'import sys, numpy as np',
      'from ohz.featstore import read_feature_file',
      'fs = read_feature_file(sys.argv[1])',
      'print(fs.n, fs.dim, fs.manifest.backbone_id)',
      'print(float(np.float64(fs.features.astype(np.float64)).sum()))',
      'print(",".join(str(x) for x in fs.labels))',
    ].join('\n')
    const out = execFileSync('python3', ['-c', script, path], { encoding: 'utf-8' })
    const [shape, total, labels] = out.trim().split('\n')
    expect(shape).toBe('6 4 toy')
    let expected = 0
    for (const v of set.features) expected += v
    expect(parseFloat(total)).toBeCloseTo(expected, 10)
    expect(labels).toBe(Array.from(set.labels).join(','))
  })

  it.skipIf(!pythonReadsOhfs())('we read files the python engine wrote', () => {
    const path = tmpFile('reverse.ohfs')
    const script = [
      'import sys, numpy as np',
      'from ohz.featstore import FeatureSet, Manifest, write_feature_file',
      'fs = FeatureSet(features=np.arange(12, dtype=np.float32).reshape(3, 4),',
      '                labels=np.array([7, 8, -1]),',
      '                manifest=Manifest(backbone_id="pyside"))',
      'write_feature_file(fs, sys.argv[1])',
    ].join('\n')
    execFileSync('python3', ['-c', script, path])
    const set = readFeatureFile(path)
    expect(set.n).toBe(3)
    expect(set.dim).toBe(4)
    expect(set.manifest.backbone_id).toBe('pyside')
    expect(Array.from(set.labels).map(Number)).toEqual([7, 8, -1])
    expect(set.features[11]).toBe(11)
  })
})
