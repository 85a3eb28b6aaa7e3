/**
 * Feature-file verification: header sanity, finite payload, label ranges,
 * manifest/dim agreement, and per-class counts.
 */

import { classCounts } from './cifar10'
import { readFeatureFile } from './ohfs'

export interface VerifyReport {
  ok: boolean
  problems: string[]
  rows: number
  dim: number
  backboneId: string
  classCounts: number[]
  oodRows: number
}

export function verifyFeatureFile(path: string): VerifyReport {
  const set = readFeatureFile(path) // throws on structural violations
  const problems: string[] = []

  for (let i = 0; i < set.features.length; i++) {
    if (!Number.isFinite(set.features[i])) {
      problems.push(`non-finite feature value at flat index ${i}`)
      break
    }
  }
  if (set.manifest.feature_dim !== set.dim) {
    problems.push(`manifest feature_dim ${set.manifest.feature_dim} != matrix width ${set.dim}`)
  }

  let oodRows = 0
  for (const label of set.labels) {
    const v = Number(label)
    if (v === -1) oodRows++
    else if (v < 0 || v > 9) problems.push(`label ${v} outside 0..9 / -1`)
  }

  return {
    ok: problems.length === 0,
    problems,
    rows: set.n,
    dim: set.dim,
    backboneId: set.manifest.backbone_id,
    classCounts: classCounts(set.labels),
    oodRows,
  }
}

export function formatReport(path: string, report: VerifyReport): string {
  const lines = [
    `${path}: ${report.ok ? 'OK' : 'VIOLATIONS'}`,
    `  rows=${report.rows} dim=${report.dim} backbone=${report.backboneId}`,
    `  class counts: ${report.classCounts.join(' ')}` +
      (report.oodRows ? `  (plus ${report.oodRows} unlabeled rows)` : ''),
  ]
  for (const p of report.problems) lines.push(`  problem: ${p}`)
  return lines.join('\n')
}
