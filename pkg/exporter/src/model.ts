/** Deterministic tfjs models with named layers for activation capture.
 *
 * Model weights are filled from a seeded PRNG (not tfjs's global RNG), so
 * two constructions of the same named model are identical.
 */
import * as tf from '@tensorflow/tfjs'

import { LayerNotFound } from './errors.js'
import { mulberry32, uniformArray } from './random.js'

export interface ModelSpec {
  name: string
  imageSize: number
  channels: number
  numClasses: number
  seed: number
}

export const MODEL_PRESETS: Record<string, ModelSpec> = {
  'tiny-conv': {
    name: 'tiny-conv',
    imageSize: 16,
    channels: 1,
    numClasses: 4,
    seed: 7,
  },
}

export function buildModel(spec: ModelSpec): tf.LayersModel {
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      name: 'conv1',
      inputShape: [spec.imageSize, spec.imageSize, spec.channels],
      filters: 8,
      kernelSize: 3,
      padding: 'same',
      activation: 'relu',
    }),
  )
  model.add(tf.layers.maxPooling2d({ name: 'pool1', poolSize: 2 }))
  model.add(
    tf.layers.conv2d({
      name: 'conv2',
      filters: 16,
      kernelSize: 3,
      padding: 'same',
      activation: 'relu',
    }),
  )
  model.add(tf.layers.maxPooling2d({ name: 'pool2', poolSize: 2 }))
  model.add(tf.layers.globalAveragePooling2d({ name: 'gap' }))
  model.add(tf.layers.dense({ name: 'head', units: spec.numClasses }))

  // overwrite the randomly initialized weights with seeded ones
  const rand = mulberry32(spec.seed)
  for (const layer of model.layers) {
    const seeded = layer.getWeights().map(w => {
      const values = uniformArray(rand, w.size, 0.5)
      return tf.tensor(values, w.shape)
    })
    if (seeded.length > 0) {
      layer.setWeights(seeded)
    }
  }
  return model
}

export function resolveModel(name: string): {
  spec: ModelSpec
  model: tf.LayersModel
} {
  const spec = MODEL_PRESETS[name]
  if (!spec) {
    throw new LayerNotFound(name, Object.keys(MODEL_PRESETS))
  }
  return { spec, model: buildModel(spec) }
}

/** Sub-model emitting the named layer's output; errors if absent. */
export function layerTap(model: tf.LayersModel, layerName: string): tf.LayersModel {
  const names = model.layers.map(l => l.name)
  if (!names.includes(layerName)) {
    throw new LayerNotFound(layerName, names)
  }
  const layer = model.getLayer(layerName)
  return tf.model({
    inputs: model.inputs,
    outputs: layer.output as tf.SymbolicTensor,
  })
}
