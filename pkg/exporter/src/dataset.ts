/** Seeded synthetic image dataset: one template pattern per class plus
 * pixel noise. The exporter only needs a deterministic labeled image
 * source; no augmentation, no corruption (label noise is the consumer's
 * concern).
 */
import { ModelSpec } from './model.js'
import { mulberry32 } from './random.js'

export type SplitName = 'train' | 'val' | 'test'

export const SPLIT_SIZES: Record<SplitName, number> = {
  train: 48,
  val: 24,
  test: 24,
}

const SPLIT_SEEDS: Record<SplitName, number> = {
  train: 101,
  val: 202,
  test: 303,
}

export interface ImageBatch {
  /** N x H x W x C, row major */
  images: Float32Array
  labels: Uint32Array
  n: number
}

export function makeSplit(spec: ModelSpec, split: SplitName): ImageBatch {
  const n = SPLIT_SIZES[split]
  const rand = mulberry32(spec.seed * 1000 + SPLIT_SEEDS[split])
  const hw = spec.imageSize
  const pixels = hw * hw * spec.channels

  // class templates: deterministic per (model seed, class)
  const templates: Float32Array[] = []
  for (let c = 0; c < spec.numClasses; c++) {
    const trand = mulberry32(spec.seed * 7919 + c)
    const t = new Float32Array(pixels)
    for (let p = 0; p < pixels; p++) {
      t[p] = trand()
    }
    templates.push(t)
  }

  const images = new Float32Array(n * pixels)
  const labels = new Uint32Array(n)
  for (let i = 0; i < n; i++) {
    const c = i % spec.numClasses
    labels[i] = c
    const base = templates[c]
    for (let p = 0; p < pixels; p++) {
      images[i * pixels + p] = base[p] + 0.1 * (2 * rand() - 1)
    }
  }
  return { images, labels, n }
}
