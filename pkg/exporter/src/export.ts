/** Activation capture and rogf emission.
 *
 * For each requested layer: forward the split through a sub-model tapped
 * at that layer, spatially average-pool (N x H x W x F -> N x F; 2-d
 * outputs pass through unchanged), quantize to f32 and write one rogf
 * file. A manifest.json ties the files together.
 */
import * as fs from 'fs'
import * as path from 'path'

import * as tf from '@tensorflow/tfjs'

import { ImageBatch, SplitName, makeSplit } from './dataset.js'
import { ShapeError } from './errors.js'
import { ModelSpec, layerTap, resolveModel } from './model.js'
import { encodeRogf } from './rogf.js'

export interface LayerExport {
  layer: string
  path: string
  dim: number
}

export interface ExportManifest {
  model: string
  split: SplitName
  n: number
  numClasses: number
  pooling: 'spatial-average'
  seed: number
  layers: LayerExport[]
}

/** N x H x W x F -> N x F mean over the spatial axes; N x F passes through. */
export function pooledActivations(activation: tf.Tensor): tf.Tensor2D {
  if (activation.rank === 2) {
    return activation as tf.Tensor2D
  }
  if (activation.rank === 4) {
    return tf.mean(activation, [1, 2]) as tf.Tensor2D
  }
  throw new ShapeError(
    `expected rank-2 or rank-4 activations, got rank ${activation.rank}`,
  )
}

export function captureLayer(
  model: tf.LayersModel,
  spec: ModelSpec,
  batch: ImageBatch,
  layerName: string,
): { pooled: Float32Array; dim: number } {
  const tap = layerTap(model, layerName)
  const result = tf.tidy(() => {
    const input = tf.tensor4d(batch.images, [
      batch.n,
      spec.imageSize,
      spec.imageSize,
      spec.channels,
    ])
    return pooledActivations(tap.predict(input) as tf.Tensor)
  })
  const dim = result.shape[1]
  const pooled = result.dataSync() as Float32Array
  result.dispose()
  return { pooled: Float32Array.from(pooled), dim }
}

export function runExport(options: {
  modelName: string
  split: SplitName
  layers: string[]
  outDir: string
}): ExportManifest {
  const { spec, model } = resolveModel(options.modelName)
  const batch = makeSplit(spec, options.split)
  fs.mkdirSync(options.outDir, { recursive: true })

  const layers: LayerExport[] = []
  for (const layerName of options.layers) {
    const { pooled, dim } = captureLayer(model, spec, batch, layerName)
    const fileName = `${options.split}-${layerName}.rogf`
    const filePath = path.join(options.outDir, fileName)
    fs.writeFileSync(
      filePath,
      encodeRogf({
        features: pooled,
        labels: batch.labels,
        n: batch.n,
        d: dim,
        numClasses: spec.numClasses,
      }),
    )
    layers.push({ layer: layerName, path: fileName, dim })
  }

  const manifest: ExportManifest = {
    model: spec.name,
    split: options.split,
    n: batch.n,
    numClasses: spec.numClasses,
    pooling: 'spatial-average',
    seed: spec.seed,
    layers,
  }
  fs.writeFileSync(
    path.join(options.outDir, 'manifest.json'),
    JSON.stringify(manifest, null, 2) + '\n',
  )
  return manifest
}
